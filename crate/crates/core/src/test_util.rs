use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::NonlinearSystem;

pub fn seeded_vector(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Largest entrywise gap between the analytic Jacobian and central
/// differences of the residual, relative to `max(1, |J_ij|)`.
pub fn fd_jacobian_max_rel_error<S: NonlinearSystem>(sys: &S, x: &[f64]) -> f64 {
    let j = sys.jacobian(x).unwrap().to_dense();
    let n = x.len();
    let mut worst = 0.0f64;
    for col in 0..n {
        let eps = 1e-6 * (1.0 + x[col].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[col] += eps;
        xm[col] -= eps;
        let rp = sys.residual(&xp).unwrap();
        let rm = sys.residual(&xm).unwrap();
        for row in 0..n {
            let fd = (rp[row] - rm[row]) / (2.0 * eps);
            let err = (fd - j[row][col]).abs() / j[row][col].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}
