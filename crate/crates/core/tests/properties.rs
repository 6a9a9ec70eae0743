mod common;

use bifurcate_core::assembly::{assemble_a, NonlinearSystem, Problem, SingleProblem};
use bifurcate_core::continuation::{sweep, InitialGuess, SweepPlan, Termination};
use bifurcate_core::grid::{max_norm, Grid};
use bifurcate_core::io::{node_x, read_profile, write_profile};
use bifurcate_core::nonlinearity::{apriori_c, CutoffParams};
use bifurcate_core::solve::{newton_solve, verify_certificates, NewtonConfig};
use proptest::prelude::*;

use common::*;

fn clamped(m: usize, f: &[f64], lambda: f64) -> SingleProblem {
    let grid = Grid::interval(0.0, 1.0, m).unwrap();
    let f = poly(f);
    let k =
        apriori_c(&f, lambda, grid.h_star_min()).unwrap() * grid.h_star_max() / grid.h_star_min();
    let c = CutoffParams::new(0.0, k, lambda, grid.h_star_max(), grid.h_star_min()).unwrap();
    SingleProblem::new(grid, f, lambda)
        .unwrap()
        .with_cutoff(c)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_monotone(m in 4usize..40, seed in 0u64..1000) {
        let a = assemble_a(&Grid::interval(0.0, 1.0, m).unwrap());
        let b = seeded_vector(seed, m, 0.0, 1.0);
        let x = a.solve(&b, None).unwrap();
        prop_assert!(x.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn fixed_point_map_is_monotone(m in 5usize..40, lambda in 0.2f64..3.0, seed in 0u64..1000) {
        let p = clamped(m, &[0.0, 0.0, 1.0], lambda);
        let lo = seeded_vector(seed, m, 0.0, 5.0);
        let bump = seeded_vector(seed + 1, m, 0.0, 5.0);
        let hi: Vec<f64> = lo.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let a = &p.operator().matrix;
        let tl = a.solve(&p.boundary_rhs(&lo).unwrap(), None).unwrap();
        let th = a.solve(&p.boundary_rhs(&hi).unwrap(), None).unwrap();
        prop_assert!(tl.iter().zip(&th).all(|(l, h)| *l <= *h + 1e-12));
    }

    #[test]
    fn jacobian_matches_differences(seed in 0u64..10_000, lambda in 0.1f64..5.0) {
        let p = system(15, &[0.0, 1.0, 1.0], &[0.0, 0.1, -0.1, 1.0], lambda);
        let w = seeded_vector(seed, p.dim(), 0.0, 2.0);
        prop_assert!(fd_jacobian_error(&p, &w) <= 1e-5);
    }

    #[test]
    fn converged_solutions_peak_on_the_boundary(lambda in 0.3f64..2.5) {
        let p = single(41, &[0.0, 0.0, 1.0], lambda);
        let guess = InitialGuess::EigenfunctionProfile(1.0).realize(&p).unwrap();
        let cfg = NewtonConfig::default();
        let out = newton_solve(&p, &guess, &cfg).unwrap();
        prop_assume!(out.converged());
        let c = verify_certificates(&p, &out.solution, &cfg);
        prop_assert!(c.max_on_boundary && c.apriori_ok && c.positive);
        let bound = apriori_c(&poly(&[0.0, 0.0, 1.0]), lambda, p.grid().h_star_min()).unwrap();
        prop_assert!(max_norm(&out.solution) <= bound);
    }
}

fn short_branch(problem: &Problem, from: f64, to: f64) -> bifurcate_core::continuation::Branch {
    let guess = InitialGuess::EigenfunctionProfile(1.0);
    let plan = SweepPlan::new(from, to, guess).with_delta_lambda(0.01);
    sweep(problem, &plan, &NewtonConfig::default()).unwrap()
}

#[test]
fn stored_profiles_reproduce_their_residuals() {
    let p = system(51, &[0.0, 1.0, 1.0], &[0.0, 0.0, 1.0], 1.0);
    let b = short_branch(&p, 3.0, 2.5);
    assert_eq!(b.termination, Termination::ReachedEnd);
    let xs = node_x(p.grid());
    for q in &b.points {
        let mut buf = Vec::new();
        write_profile(&mut buf, &xs, q.profile.as_ref().unwrap()).unwrap();
        let (_, w) = read_profile(&buf[..]).unwrap();
        let at = p.with_lambda(q.lambda).unwrap();
        let r = max_norm(&at.residual(&w).unwrap());
        assert!(
            (r - q.residual).abs() <= 1e-12 * q.residual.max(f64::MIN_POSITIVE),
            "{r} vs {}",
            q.residual
        );
        assert!(r <= 1e-6);
    }
}

#[test]
fn superlinear_branch_grows_as_lambda_shrinks() {
    let p = single(61, &[0.0, 0.0, 1.0], 1.0);
    let b = short_branch(&p, 2.0, 0.5);
    assert_eq!(b.termination, Termination::ReachedEnd);
    assert!(b.points.windows(2).all(|w| w[1].max_u > w[0].max_u));
    assert!(b.points.iter().all(|q| q.certificates.all()));
}

#[test]
fn symmetric_system_matches_the_single_equation() {
    let s = single(41, &[0.0, 0.0, 1.0], 1.2);
    let y = system(41, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], 1.2);
    let cfg = NewtonConfig::default();
    let u = newton_solve(
        &s,
        &InitialGuess::ConstantProfile(1.0).realize(&s).unwrap(),
        &cfg,
    )
    .unwrap();
    let w = newton_solve(
        &y,
        &InitialGuess::ConstantProfile(1.0).realize(&y).unwrap(),
        &cfg,
    )
    .unwrap();
    assert!(u.converged() && w.converged());
    let (wu, wv) = w.solution.split_at(41);
    for i in 0..41 {
        assert!((wu[i] - u.solution[i]).abs() <= 1e-8 * max_norm(&u.solution));
        assert!((wv[i] - u.solution[i]).abs() <= 1e-8 * max_norm(&u.solution));
    }
}

#[test]
fn fold_gives_two_solutions_before_the_turning_point() {
    let (p, t) = run_figure(3);
    let l1 = t.lambda1.finite().unwrap();
    let Termination::SolverFailed {
        lambda_star,
        lambda_l,
    } = t.branches[1].termination
    else {
        panic!("expected a fold");
    };
    assert!(l1 < lambda_l && lambda_l < lambda_star);
    let before = t.branches[1]
        .points
        .iter()
        .find(|q| (q.lambda - (lambda_l - 0.05)).abs() < 1e-9)
        .unwrap();
    let after = t.branches[2]
        .points
        .iter()
        .find(|q| (q.lambda - before.lambda).abs() < 1e-9)
        .unwrap();
    assert!(
        (after.max_u - before.max_u).abs() >= 1e-3,
        "{} vs {}",
        after.max_u,
        before.max_u
    );
    assert!(p.grid().num_nodes() == 101);
}
