//! Damped Newton, the monotone fixed-point iteration for the clamped
//! problem, and the qualitative certificates of a computed solution.

use thiserror::Error;

use crate::assembly::{AssemblyError, NonlinearSystem, Problem};
use crate::grid::max_norm;
use crate::linalg::{LinalgError, SparseMatrix};
use crate::nonlinearity::{apriori_c, cutoff_inactive, supersolution_level};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("fixed-point iteration needs a problem with a cutoff")]
    MissingCutoff,
    #[error("iterate {iteration} left the bracket [{lower}, {upper}] at node {node}: {value}")]
    BracketViolation {
        iteration: usize,
        node: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    pub backtrack_factor: f64,
    pub min_step_fraction: f64,
    pub positivity_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            step_tol: 1e-6,
            max_iters: 100,
            backtrack_factor: 0.5,
            min_step_fraction: 2f64.powi(-20),
            positivity_floor: 1e-12,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::Config(m.to_string()));
        if !(self.residual_tol > 0.0) || !(self.step_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.min_step_fraction > 0.0 && self.min_step_fraction <= 1.0) {
            return bad("min_step_fraction must lie in (0, 1]");
        }
        if !(self.positivity_floor >= 0.0) {
            return bad("positivity_floor must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIters,
    LineSearchFailed,
    /// The step fell below `step_tol` while the residual stayed above
    /// `residual_tol`.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Certificates {
    pub positive: bool,
    pub max_on_boundary: bool,
    pub apriori_ok: bool,
    pub cutoff_inactive: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.positive && self.max_on_boundary && self.apriori_ok && self.cutoff_inactive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Node values; `(u; v)` for systems.
    pub solution: Vec<f64>,
    pub iters: usize,
    pub final_residual_norm: f64,
    /// Computed only for converged solves; all `false` otherwise.
    pub certificates: Certificates,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Iterates past this size count as blow-up.
const DIVERGENCE_BOUND: f64 = 1e100;

struct NewtonRun {
    status: SolveStatus,
    x: Vec<f64>,
    iters: usize,
    residual: f64,
}

fn residual_norm<S: NonlinearSystem>(sys: &S, x: &[f64]) -> Option<f64> {
    // Out-of-domain arguments (negative values under a cutoff) are rejected
    // like non-finite ones.
    let r = sys.residual(x).ok()?;
    let n = max_norm(&r);
    n.is_finite().then_some(n)
}

fn newton<S: NonlinearSystem>(sys: &S, initial: &[f64], cfg: &NewtonConfig) -> NewtonRun {
    let perm = sys.ordering();
    let mut x = initial.to_vec();
    let Some(mut rn) = residual_norm(sys, &x) else {
        return NewtonRun {
            status: SolveStatus::Diverged,
            x,
            iters: 0,
            residual: f64::INFINITY,
        };
    };
    let done = |status, x, iters, residual| NewtonRun {
        status,
        x,
        iters,
        residual,
    };
    for it in 0..cfg.max_iters {
        let (j, r): (SparseMatrix, Vec<f64>) = match (sys.jacobian(&x), sys.residual(&x)) {
            (Ok(j), Ok(r)) => (j, r),
            _ => return done(SolveStatus::Diverged, x, it, rn),
        };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = match j.solve(&neg, perm.as_deref()) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return done(SolveStatus::LineSearchFailed, x, it, rn),
        };
        // A small residual alone is not enough: near the trivial solution
        // every small vector has a small residual.
        let small_step = max_norm(&dx) <= cfg.step_tol * (1.0 + max_norm(&x));
        if rn <= cfg.residual_tol && small_step {
            return done(SolveStatus::Converged, x, it, rn);
        }

        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            if let Some(tn) = residual_norm(sys, &trial) {
                if tn <= (1.0 - 1e-4 * t) * rn || tn <= cfg.residual_tol {
                    break Some((trial, tn));
                }
            }
            t *= cfg.backtrack_factor;
            if t < cfg.min_step_fraction {
                break None;
            }
        };
        let Some((next, tn)) = accepted else {
            return done(SolveStatus::LineSearchFailed, x, it + 1, rn);
        };
        let step = t * max_norm(&dx);
        x = next;
        rn = tn;
        let size = max_norm(&x);
        if size > DIVERGENCE_BOUND {
            return done(SolveStatus::Diverged, x, it + 1, rn);
        }
        if step <= cfg.step_tol * (1.0 + size) && rn > cfg.residual_tol {
            return done(SolveStatus::Stalled, x, it + 1, rn);
        }
    }
    done(SolveStatus::MaxIters, x, cfg.max_iters, rn)
}

/// Damped Newton with backtracking on the residual max-norm. Converged
/// means the residual is below `residual_tol` and the next Newton step is
/// below `step_tol (1 + |x|)`.
///
/// Non-convergence is reported through [`SolveOutcome::status`]; only an
/// initial guess of the wrong length or an invalid config is an error.
pub fn newton_solve(
    problem: &Problem,
    initial: &[f64],
    cfg: &NewtonConfig,
) -> Result<SolveOutcome, SolveError> {
    cfg.validate()?;
    if initial.len() != problem.dim() {
        return Err(AssemblyError::Dimension {
            expected: problem.dim(),
            got: initial.len(),
        }
        .into());
    }
    let run = newton(problem, initial, cfg);
    let certificates = if run.status == SolveStatus::Converged {
        verify_certificates(problem, &run.x, cfg)
    } else {
        Certificates::default()
    };
    Ok(SolveOutcome {
        status: run.status,
        solution: run.x,
        iters: run.iters,
        final_residual_norm: run.residual,
        certificates,
    })
}

/// Checks positivity, the discrete maximum principle, the a-priori bound
/// and (for clamped problems) that the clamp is inactive at the boundary.
///
/// The a-priori bound is only available for the single equation; systems
/// report it as satisfied.
pub fn verify_certificates(problem: &Problem, u: &[f64], cfg: &NewtonConfig) -> Certificates {
    let grid = problem.grid();
    let n = grid.num_nodes();
    let comps: Vec<&[f64]> = u.chunks(n).collect();
    let boundary = match problem {
        Problem::Single(p) => &p.operator().boundary,
        Problem::System(p) => &p.operator().boundary,
    };

    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let positive = min >= cfg.positivity_floor && u.iter().any(|&x| x > 0.0);

    let max_on_boundary = comps.iter().all(|c| {
        let top = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        boundary.iter().any(|&k| c[k] >= top)
    });

    let apriori_ok = match problem {
        Problem::Single(p) => match apriori_c(p.f(), p.lambda(), grid.h_star_min()) {
            Ok(c) => comps[0].iter().all(|&x| x <= c + 1e-8),
            Err(_) => false,
        },
        Problem::System(_) => true,
    };

    let on_boundary = |c: &[f64]| boundary.iter().map(|&k| c[k]).collect::<Vec<_>>();
    let cutoff_ok = match problem {
        Problem::Single(p) => p
            .cutoff()
            .is_none_or(|c| cutoff_inactive(p.f(), c, &on_boundary(comps[0]))),
        // f acts on v, g on u.
        Problem::System(p) => p.cutoffs().is_none_or(|(cf, cg)| {
            cutoff_inactive(p.f(), cf, &on_boundary(comps[1]))
                && cutoff_inactive(p.g(), cg, &on_boundary(comps[0]))
        }),
    };

    Certificates {
        positive,
        max_on_boundary,
        apriori_ok,
        cutoff_inactive: cutoff_ok,
    }
}

/// Where the monotone iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointStart {
    /// Constant supersolution: `M_K` inside, `M_K + K` on the boundary.
    Supersolution,
    /// The zero subsolution.
    Subsolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub outcome: SolveOutcome,
    /// Max-norm of every iterate, starting with the initial one.
    pub max_norm_history: Vec<f64>,
    /// Upper end of the bracket `[0, ū]` at boundary nodes.
    pub upper_level: f64,
}

/// Iterates `w ← A⁻¹ b(w)` for a clamped problem, where `b` carries the
/// clamped flux on boundary rows.
///
/// Every iterate must stay inside `[0, ū]`; leaving it is an invariant
/// breach reported as [`SolveError::BracketViolation`]. Convergence needs
/// both a step below `step_tol` and a residual below `residual_tol`.
pub fn fixed_point_solve(
    problem: &Problem,
    start: FixedPointStart,
    cfg: &NewtonConfig,
) -> Result<FixedPointOutcome, SolveError> {
    cfg.validate()?;
    let k = match problem {
        Problem::Single(p) => p.cutoff().ok_or(SolveError::MissingCutoff)?.k,
        Problem::System(p) => {
            let (cf, cg) = p.cutoffs().ok_or(SolveError::MissingCutoff)?;
            cf.k.max(cg.k)
        }
    };
    let grid = problem.grid();
    let n = grid.num_nodes();
    let (interior_level, boundary_level) = supersolution_level(k, grid.dim(), grid.h_star_min());
    let upper: Vec<f64> = (0..n)
        .map(|i| {
            if grid.classify_flat(i).is_interior() {
                interior_level
            } else {
                boundary_level
            }
        })
        .collect();
    let upper: Vec<f64> = upper.iter().cycle().take(problem.dim()).copied().collect();

    let (op, rhs): (_, Box<dyn Fn(&[f64]) -> Result<Vec<f64>, AssemblyError>>) = match problem {
        Problem::Single(p) => (p.operator(), Box::new(|w: &[f64]| p.boundary_rhs(w))),
        Problem::System(p) => (p.operator(), Box::new(|w: &[f64]| p.boundary_rhs(w))),
    };
    let lu = op.matrix.factor_banded(None)?;

    let mut w = match start {
        FixedPointStart::Supersolution => upper.clone(),
        FixedPointStart::Subsolution => vec![0.0; problem.dim()],
    };
    let tiny = 1e-9;
    let check = |iteration: usize, w: &[f64]| -> Result<(), SolveError> {
        for (node, (&value, &hi)) in w.iter().zip(&upper).enumerate() {
            let slack = tiny * (1.0 + hi);
            if value < -slack || value > hi + slack {
                return Err(SolveError::BracketViolation {
                    iteration,
                    node,
                    value,
                    lower: 0.0,
                    upper: hi,
                });
            }
        }
        Ok(())
    };
    check(0, &w)?;
    let mut history = vec![max_norm(&w)];

    let finish = |status, w: Vec<f64>, iters, history| -> Result<FixedPointOutcome, SolveError> {
        let res = max_norm(&problem.residual(&w)?);
        let certificates = if status == SolveStatus::Converged {
            verify_certificates(problem, &w, cfg)
        } else {
            Certificates::default()
        };
        Ok(FixedPointOutcome {
            outcome: SolveOutcome {
                status,
                solution: w,
                iters,
                final_residual_norm: res,
                certificates,
            },
            max_norm_history: history,
            upper_level: boundary_level,
        })
    };

    for it in 1..=cfg.max_iters {
        let b = rhs(&w)?;
        let mut next = Vec::with_capacity(w.len());
        for block in b.chunks(n) {
            next.extend(lu.solve(block)?);
        }
        check(it, &next)?;
        let step = w
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        w = next;
        history.push(max_norm(&w));
        if step <= cfg.step_tol && max_norm(&problem.residual(&w)?) <= cfg.residual_tol {
            return finish(SolveStatus::Converged, w, it, history);
        }
    }
    finish(SolveStatus::MaxIters, w, cfg.max_iters, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::SingleProblem;
    use crate::grid::Grid;
    use crate::nonlinearity::{CutoffParams, Polynomial};

    fn single(m: usize, f: &[f64], lambda: f64) -> Problem {
        let grid = Grid::interval(0.0, 1.0, m).unwrap();
        SingleProblem::new(grid, Polynomial::new(f.to_vec()).unwrap(), lambda)
            .unwrap()
            .into()
    }

    fn eigen_profile(m: usize, amp: f64) -> Vec<f64> {
        let t = 0.5f64.tanh();
        (0..m)
            .map(|i| {
                let x = i as f64 / (m - 1) as f64;
                amp * (x.cosh() - t * x.sinh())
            })
            .collect()
    }

    #[test]
    fn trivial_solution_needs_no_iterations() {
        let p = single(51, &[0.0, 0.0, 1.0], 1.0);
        let out = newton_solve(&p, &vec![0.0; 51], &NewtonConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert_eq!(out.iters, 0);
        let c = out.certificates;
        assert!(!c.positive && c.max_on_boundary && c.apriori_ok && c.cutoff_inactive);
    }

    #[test]
    fn quadratic_flux_at_three() {
        let p = single(151, &[0.0, 0.0, 1.0], 3.0);
        let out = newton_solve(&p, &eigen_profile(151, 1.0), &NewtonConfig::default()).unwrap();
        assert!(out.converged(), "{:?}", out.status);
        assert!(out.certificates.all(), "{:?}", out.certificates);
        // Independent re-evaluation of the residual.
        assert!(max_norm(&p.residual(&out.solution).unwrap()) <= 1e-6);
        let u = &out.solution;
        for i in 0..151 {
            assert!((u[i] - u[150 - i]).abs() <= 1e-8 * max_norm(u));
        }
    }

    #[test]
    fn interior_maximum_fails_certificate() {
        let p = single(11, &[0.0, 0.0, 1.0], 1.0);
        let mut u = vec![1.0; 11];
        u[5] = 2.0;
        let c = verify_certificates(&p, &u, &NewtonConfig::default());
        assert!(!c.max_on_boundary);
        assert!(c.positive);
    }

    #[test]
    fn past_the_fold_is_a_status_not_an_error() {
        // With f(0) > 0 positive solutions only exist for small lambda.
        let p = single(41, &[1.0, 0.0, 1.0], 10.0);
        let out = newton_solve(&p, &[0.0; 41], &NewtonConfig::default()).unwrap();
        assert_ne!(out.status, SolveStatus::Converged);
        assert_eq!(out.certificates, Certificates::default());
    }

    #[test]
    fn wrong_length_is_an_error() {
        let p = single(11, &[0.0, 0.0, 1.0], 1.0);
        assert!(newton_solve(&p, &[0.0; 3], &NewtonConfig::default()).is_err());
        let bad = NewtonConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(newton_solve(&p, &[0.0; 11], &bad).is_err());
    }

    #[test]
    fn fixed_point_requires_cutoff() {
        let p = single(11, &[0.0, 0.0, 1.0], 1.0);
        assert_eq!(
            fixed_point_solve(&p, FixedPointStart::Supersolution, &NewtonConfig::default()),
            Err(SolveError::MissingCutoff)
        );
    }

    fn cut(m: usize, f: &[f64], lambda: f64, rho: f64, k: f64) -> Problem {
        let grid = Grid::interval(0.0, 1.0, m).unwrap();
        let c = CutoffParams::new(rho, k, lambda, grid.h_star_max(), grid.h_star_min()).unwrap();
        SingleProblem::new(grid, Polynomial::new(f.to_vec()).unwrap(), lambda)
            .unwrap()
            .with_cutoff(c)
            .unwrap()
            .into()
    }

    #[test]
    fn zero_subsolution_is_fixed_when_rho_vanishes() {
        let p = cut(21, &[0.0, 0.0, 1.0], 1.0, 0.0, 5.0);
        let out =
            fixed_point_solve(&p, FixedPointStart::Subsolution, &NewtonConfig::default()).unwrap();
        assert!(out.outcome.converged());
        assert_eq!(out.outcome.iters, 1);
        assert!(out.outcome.solution.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn positive_rho_gives_positive_limit() {
        let p = cut(21, &[0.0, 0.0, 1.0], 1.0, 0.05, 5.0);
        let cfg = NewtonConfig {
            max_iters: 10_000,
            ..Default::default()
        };
        let out = fixed_point_solve(&p, FixedPointStart::Subsolution, &cfg).unwrap();
        assert!(out.outcome.converged(), "{:?}", out.outcome.status);
        assert!(out.outcome.solution.iter().all(|&x| x >= 1e-12));
        assert!(out.outcome.final_residual_norm <= 1e-6);
    }

    #[test]
    fn supersolution_start_decreases() {
        let p = cut(21, &[0.0, 0.0, 1.0], 1.0, 0.0, 5.0);
        let cfg = NewtonConfig {
            max_iters: 10_000,
            ..Default::default()
        };
        let out = fixed_point_solve(&p, FixedPointStart::Supersolution, &cfg).unwrap();
        let h = &out.max_norm_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(out.outcome.final_residual_norm <= 1e-6);
    }
}
