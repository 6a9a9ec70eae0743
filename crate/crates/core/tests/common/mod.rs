#![allow(dead_code)]

use bifurcate_core::assembly::{NonlinearSystem, Problem, SingleProblem, SystemProblem};
use bifurcate_core::continuation::{trace_full_curve, DeltaOffset, Regime, Trace, TraceOptions};
use bifurcate_core::grid::Grid;
use bifurcate_core::io::write_curve;
use bifurcate_core::nonlinearity::Polynomial;
use bifurcate_core::solve::NewtonConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn poly(c: &[f64]) -> Polynomial {
    Polynomial::new(c.to_vec()).unwrap()
}

pub fn single(m: usize, f: &[f64], lambda: f64) -> Problem {
    SingleProblem::new(Grid::interval(0.0, 1.0, m).unwrap(), poly(f), lambda)
        .unwrap()
        .into()
}

pub fn system(m: usize, f: &[f64], g: &[f64], lambda: f64) -> Problem {
    SystemProblem::new(
        Grid::interval(0.0, 1.0, m).unwrap(),
        poly(f),
        poly(g),
        lambda,
    )
    .unwrap()
    .into()
}

pub fn seeded_vector(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Largest entrywise gap between the analytic Jacobian and central
/// differences with step 1e-6, relative to `max(1, |J_ij|)`.
pub fn fd_jacobian_error<S: NonlinearSystem>(sys: &S, x: &[f64]) -> f64 {
    let j = sys.jacobian(x).unwrap().to_dense();
    let mut worst = 0.0f64;
    for col in 0..x.len() {
        let eps = 1e-6;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[col] += eps;
        xm[col] -= eps;
        let rp = sys.residual(&xp).unwrap();
        let rm = sys.residual(&xm).unwrap();
        for row in 0..x.len() {
            let fd = (rp[row] - rm[row]) / (2.0 * eps);
            worst = worst.max((fd - j[row][col]).abs() / j[row][col].abs().max(1.0));
        }
    }
    worst
}

/// The reference setups: problem, protocol and options.
pub fn figure(n: u8) -> (Problem, Regime, TraceOptions) {
    let d = TraceOptions::default();
    match n {
        1 => (
            single(151, &[0.0, 0.0, 1.0], 1.0),
            Regime::NoFiniteBifurcation,
            d,
        ),
        2 => (single(175, &[0.0, 2.0, 1.0], 1.0), Regime::Subcritical, d),
        3 => (
            single(101, &[0.0, 0.1, -0.1, 1.0], 1.0),
            Regime::SupercriticalWithFold,
            d,
        ),
        4 => (
            system(101, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], 1.0),
            Regime::NoFiniteBifurcation,
            TraceOptions { lambda0: 6.0, ..d },
        ),
        5 => (
            system(101, &[0.0, 1.0, 1.0], &[0.0, 0.0, 1.0], 1.0),
            Regime::NoFiniteBifurcation,
            TraceOptions { lambda0: 6.0, ..d },
        ),
        6 => (
            system(101, &[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0], 1.0),
            Regime::Subcritical,
            TraceOptions {
                delta_offset: DeltaOffset::FractionOfLambda1(0.5),
                ..d
            },
        ),
        7 => (
            system(101, &[0.0, 0.1, -0.1, 1.0], &[0.0, 0.1, -0.1, 1.0], 1.0),
            Regime::SupercriticalWithFold,
            d,
        ),
        8 => (
            system(176, &[0.0, 0.1, -0.1, 1.0], &[0.0, 1.0, 1.0], 1.0),
            Regime::SupercriticalWithFold,
            d,
        ),
        _ => panic!("no setup {n}"),
    }
}

pub fn run_figure(n: u8) -> (Problem, Trace) {
    let (p, regime, opts) = figure(n);
    let t = trace_full_curve(&p, regime, &opts, &NewtonConfig::default()).unwrap();
    (p, t)
}

pub fn curve_bytes(p: &Problem, t: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_curve(&mut buf, &t.branches, p.is_system()).unwrap();
    buf
}
