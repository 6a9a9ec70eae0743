//! Natural-parameter continuation of positive solution branches.
//!
//! A sweep marches `λ` in fixed steps from `lambda_start` towards
//! `lambda_end`, seeding each Newton solve with the previous solution. It
//! stops at the end of the interval, at the first failed solve (a fold), or
//! when the solution stops being positive (the branch has met the trivial
//! solution).

use thiserror::Error;

use crate::assembly::{AssemblyError, NonlinearSystem, Problem};
use crate::eigen::{
    eigenfunction_single, eigenfunction_system, lambda1_single, lambda1_system, EigenError, Lambda1,
};
use crate::grid::max_norm;
use crate::solve::{newton_solve, Certificates, NewtonConfig, SolveError, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("no branch found from the given initial guess at lambda = {lambda} ({status:?})")]
    NoBranch { lambda: f64, status: SolveStatus },
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("regime {regime:?} needs a finite principal eigenvalue")]
    RegimeNeedsFiniteLambda1 { regime: Regime },
    #[error("regime {regime:?} needs an infinite principal eigenvalue")]
    RegimeNeedsInfiniteLambda1 { regime: Regime },
    #[error("branch never approaches the trivial solution")]
    NoBifurcation,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// `amplitude` times the principal eigenfunction. For a system with
    /// infinite `λ₁` this is `(cosh x, sinh x)`.
    EigenfunctionProfile(f64),
    ConstantProfile(f64),
    StoredSolution(Vec<f64>),
}

impl InitialGuess {
    pub fn realize(&self, problem: &Problem) -> Result<Vec<f64>, ContinuationError> {
        let grid = problem.grid();
        let n = grid.num_nodes();
        let xs: Vec<f64> = (0..n)
            .map(|k| grid.coordinate(&grid.multi_index(k))[0])
            .collect();
        let lo = grid.domain().bounds()[0].0;
        let width = grid.domain().bounds()[0].1 - lo;
        let unit = |x: f64| (x - lo) / width;
        Ok(match self {
            InitialGuess::ConstantProfile(level) => vec![*level; problem.dim()],
            InitialGuess::StoredSolution(v) => {
                if v.len() != problem.dim() {
                    return Err(AssemblyError::Dimension {
                        expected: problem.dim(),
                        got: v.len(),
                    }
                    .into());
                }
                v.clone()
            }
            InitialGuess::EigenfunctionProfile(amp) => match problem {
                Problem::Single(_) => xs
                    .iter()
                    .map(|&x| amp * eigenfunction_single(unit(x)))
                    .collect(),
                Problem::System(p) => {
                    let res =
                        lambda1_system(p.f().derivative_at_zero(), p.g().derivative_at_zero())?;
                    if res.lambda1.is_infinite() {
                        let u = xs.iter().map(|&x| amp * unit(x).cosh());
                        let v = xs.iter().map(|&x| amp * unit(x).sinh());
                        u.chain(v).collect()
                    } else {
                        let pairs = xs
                            .iter()
                            .map(|&x| eigenfunction_system(unit(x), &res, *amp))
                            .collect::<Result<Vec<_>, _>>()?;
                        pairs
                            .iter()
                            .map(|p| p.0)
                            .chain(pairs.iter().map(|p| p.1))
                            .collect()
                    }
                }
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub delta_lambda: f64,
    pub direction: Direction,
    pub initial_guess: InitialGuess,
    /// Keep every `store_stride`-th profile (plus the first and last).
    pub store_stride: usize,
    /// Retry a failed or non-positive step with secant and amplified
    /// guesses before terminating.
    pub rescue: bool,
}

impl SweepPlan {
    pub fn new(lambda_start: f64, lambda_end: f64, initial_guess: InitialGuess) -> Self {
        let direction = if lambda_end < lambda_start {
            Direction::Left
        } else {
            Direction::Right
        };
        Self {
            lambda_start,
            lambda_end,
            delta_lambda: 1e-3,
            direction,
            initial_guess,
            store_stride: 1,
            rescue: true,
        }
    }

    pub fn with_delta_lambda(mut self, d: f64) -> Self {
        self.delta_lambda = d;
        self
    }

    pub fn with_store_stride(mut self, s: usize) -> Self {
        self.store_stride = s;
        self
    }

    pub fn validate(&self) -> Result<(), ContinuationError> {
        let bad = |m: String| Err(ContinuationError::InvalidPlan(m));
        if !(self.delta_lambda > 0.0 && self.delta_lambda.is_finite()) {
            return bad(format!(
                "delta_lambda must be positive, got {}",
                self.delta_lambda
            ));
        }
        if !(self.lambda_start > 0.0 && self.lambda_end > 0.0)
            || !self.lambda_start.is_finite()
            || !self.lambda_end.is_finite()
        {
            return bad("lambda bounds must be positive and finite".into());
        }
        let ok = match self.direction {
            Direction::Left => self.lambda_end <= self.lambda_start,
            Direction::Right => self.lambda_end >= self.lambda_start,
        };
        if !ok {
            return bad(format!(
                "{:?} sweep cannot go from {} to {}",
                self.direction, self.lambda_start, self.lambda_end
            ));
        }
        if self.store_stride == 0 {
            return bad("store_stride must be at least 1".into());
        }
        Ok(())
    }

    /// `λ_k`, landing exactly on `lambda_end` at the last step.
    pub fn lambda_at(&self, k: usize) -> f64 {
        if k >= self.steps() {
            return self.lambda_end;
        }
        let off = k as f64 * self.delta_lambda;
        match self.direction {
            Direction::Left => self.lambda_start - off,
            Direction::Right => self.lambda_start + off,
        }
    }

    /// Number of steps; a final partial step shorter than `1e-9 Δλ` is
    /// merged into the previous one.
    pub fn steps(&self) -> usize {
        let span = (self.lambda_end - self.lambda_start).abs();
        (span / self.delta_lambda - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub lambda: f64,
    pub max_u: f64,
    pub max_v: Option<f64>,
    pub profile: Option<Vec<f64>>,
    pub iters: usize,
    pub residual: f64,
    pub certificates: Certificates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    ReachedEnd,
    SolverFailed { lambda_star: f64, lambda_l: f64 },
    BelowPositivityFloor { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub direction: Direction,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
}

impl Branch {
    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }
}

fn is_positive(u: &[f64], floor: f64) -> bool {
    u.iter().all(|&x| x >= floor)
}

/// Newton resolves node values only to about `step_tol`, so anything
/// smaller in max-norm is treated as the trivial solution.
fn is_trivial(u: &[f64], cfg: &NewtonConfig) -> bool {
    max_norm(u) < cfg.step_tol.max(cfg.positivity_floor)
}

fn make_point(
    problem: &Problem,
    lambda: f64,
    out: &crate::solve::SolveOutcome,
    keep: bool,
) -> BranchPoint {
    let n = problem.grid().num_nodes();
    let (u, v) = out.solution.split_at(n);
    BranchPoint {
        lambda,
        max_u: max_norm(u),
        max_v: problem.is_system().then(|| max_norm(v)),
        profile: keep.then(|| out.solution.clone()),
        iters: out.iters,
        residual: out.final_residual_norm,
        certificates: out.certificates,
    }
}

/// Second attempt after the plain solve failed or lost positivity: a
/// secant predictor, then the previous solution scaled up. Near a
/// transcritical point the plain guess sits in the basin of the trivial
/// solution once the branch more than doubles in one step.
fn rescue(
    p: &Problem,
    last: &[f64],
    before: Option<&[f64]>,
    cfg: &NewtonConfig,
) -> Result<Option<crate::solve::SolveOutcome>, ContinuationError> {
    let mut guesses: Vec<Vec<f64>> = Vec::new();
    if let Some(b) = before {
        guesses.push(last.iter().zip(b).map(|(a, b)| 2.0 * a - b).collect());
    }
    for scale in [2.0, 4.0] {
        guesses.push(last.iter().map(|a| scale * a).collect());
    }
    let floor = 0.5 * max_norm(last);
    for g in guesses {
        let out = newton_solve(p, &g, cfg)?;
        if out.converged()
            && is_positive(&out.solution, cfg.positivity_floor)
            && max_norm(&out.solution) >= floor
        {
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// Runs one natural-parameter sweep. The problem's own `λ` is ignored.
pub fn sweep(
    problem: &Problem,
    plan: &SweepPlan,
    cfg: &NewtonConfig,
) -> Result<Branch, ContinuationError> {
    plan.validate()?;
    let label = format!(
        "{:?} sweep from {} to {}",
        plan.direction, plan.lambda_start, plan.lambda_end
    );
    let steps = plan.steps();
    let mut guess = plan.initial_guess.realize(problem)?;
    let mut points: Vec<BranchPoint> = Vec::with_capacity(steps + 1);
    let mut termination = Termination::ReachedEnd;

    let mut prev: Option<Vec<f64>> = None;
    for k in 0..=steps {
        let lambda = plan.lambda_at(k);
        let p = problem.with_lambda(lambda)?;
        let mut out = newton_solve(&p, &guess, cfg)?;
        let good = |o: &crate::solve::SolveOutcome| {
            o.converged()
                && is_positive(&o.solution, cfg.positivity_floor)
                && !is_trivial(&o.solution, cfg)
        };
        if k > 0 && !good(&out) && plan.rescue {
            if let Some(r) = rescue(&p, &guess, prev.as_deref(), cfg)? {
                out = r;
            }
        }
        if !out.converged() {
            if k == 0 {
                return Err(ContinuationError::NoBranch {
                    lambda,
                    status: out.status,
                });
            }
            termination = Termination::SolverFailed {
                lambda_star: lambda,
                lambda_l: plan.lambda_at(k - 1),
            };
            break;
        }
        if !is_positive(&out.solution, cfg.positivity_floor) || is_trivial(&out.solution, cfg) {
            if k == 0 {
                return Err(ContinuationError::NoBranch {
                    lambda,
                    status: out.status,
                });
            }
            termination = Termination::BelowPositivityFloor { lambda };
            break;
        }
        let keep = k % plan.store_stride == 0 || k == steps;
        points.push(make_point(problem, lambda, &out, keep));
        prev = Some(std::mem::replace(&mut guess, out.solution));
    }
    // The final stored point always carries its profile so sweeps can chain.
    if let Some(last) = points.last_mut() {
        if last.profile.is_none() {
            last.profile = Some(guess);
        }
    }
    Ok(Branch {
        label,
        direction: plan.direction,
        points,
        termination,
    })
}

/// The three continuation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `λ₁ = ∞`: one Left sweep from `λ₀` down to `lambda_min`.
    NoFiniteBifurcation,
    /// Left sweep to `lambda_min` from `λ₁ - δ`, then Right sweep to `λ₁`.
    Subcritical,
    /// As subcritical, but the Right sweep runs until the solver fails at
    /// the fold; the other branch is then followed back to `λ₁`.
    SupercriticalWithFold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    pub lambda_min: f64,
    /// Start of the single sweep when `λ₁ = ∞`.
    pub lambda0: f64,
    pub delta_lambda: f64,
    pub delta_offset: DeltaOffset,
    /// Eigenfunction amplitude of the first guess.
    pub amplitude: f64,
    /// Upper limit of the Right sweep hunting for the fold; `None` means `2λ₁`.
    pub lambda_max: Option<f64>,
    pub store_stride: usize,
    /// The first solve below `λ₁` must reach at least this max-norm to
    /// count as off the trivial branch.
    pub nontrivial_threshold: f64,
}

/// Offset `δ` below `λ₁` for the first solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaOffset {
    /// `max(Δλ, 1e-3)`.
    Auto,
    Absolute(f64),
    FractionOfLambda1(f64),
}

impl DeltaOffset {
    pub fn resolve(self, lambda1: f64, delta_lambda: f64) -> f64 {
        match self {
            DeltaOffset::Auto => delta_lambda.max(1e-3),
            DeltaOffset::Absolute(d) => d,
            DeltaOffset::FractionOfLambda1(q) => q * lambda1,
        }
    }
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            lambda_min: 0.01,
            lambda0: 3.0,
            delta_lambda: 1e-3,
            delta_offset: DeltaOffset::Auto,
            amplitude: 1.0,
            lambda_max: None,
            store_stride: 1,
            nontrivial_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub lambda1: Lambda1,
    /// Offset actually used for the first solve below `λ₁`.
    pub delta_used: Option<f64>,
    pub branches: Vec<Branch>,
}

pub fn principal_lambda(problem: &Problem) -> Result<Lambda1, ContinuationError> {
    Ok(match problem {
        Problem::Single(p) => lambda1_single(p.f().derivative_at_zero())?,
        Problem::System(p) => {
            lambda1_system(p.f().derivative_at_zero(), p.g().derivative_at_zero())?.lambda1
        }
    })
}

/// Finds a nontrivial positive solution just below `λ₁`, doubling the
/// offset until one appears or the offset passes `λ₁ / 2`.
fn first_solution_below(
    problem: &Problem,
    lambda1: f64,
    delta: f64,
    opts: &TraceOptions,
    cfg: &NewtonConfig,
) -> Result<(f64, Vec<f64>), ContinuationError> {
    let guess = InitialGuess::EigenfunctionProfile(opts.amplitude).realize(problem)?;
    let mut d = delta;
    let mut last = None;
    while d <= 0.5 * lambda1 * (1.0 + 1e-12) {
        let lambda = lambda1 - d;
        let out = newton_solve(&problem.with_lambda(lambda)?, &guess, cfg)?;
        if out.converged()
            && is_positive(&out.solution, cfg.positivity_floor)
            && max_norm(&out.solution) >= opts.nontrivial_threshold
        {
            return Ok((d, out.solution));
        }
        last = Some((lambda, out.status));
        d *= 2.0;
    }
    let (lambda, status) = last.unwrap_or((lambda1 - delta, SolveStatus::MaxIters));
    Err(ContinuationError::NoBranch { lambda, status })
}

/// At the last converged point of a branch that ended at a fold, looks for
/// a second positive solution by extrapolating along the secant beyond it.
/// `fallback` supplies the predecessor when the branch has a single point.
fn hop_across_fold(
    problem: &Problem,
    branch: &Branch,
    fallback: Option<&BranchPoint>,
    cfg: &NewtonConfig,
) -> Result<Option<Vec<f64>>, ContinuationError> {
    let n = branch.points.len();
    let Some(last_pt) = branch.points.last() else {
        return Ok(None);
    };
    let prev_pt = if n >= 2 {
        Some(&branch.points[n - 2])
    } else {
        fallback
    };
    let (Some(prev), Some(last)) = (
        prev_pt.and_then(|p| p.profile.as_ref()),
        last_pt.profile.as_ref(),
    ) else {
        return Ok(None);
    };
    let p = problem.with_lambda(last_pt.lambda)?;
    for kappa in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let guess: Vec<f64> = last
            .iter()
            .zip(prev)
            .map(|(a, b)| a + kappa * (a - b))
            .collect();
        let out = newton_solve(&p, &guess, cfg)?;
        if out.converged()
            && is_positive(&out.solution, cfg.positivity_floor)
            && out
                .solution
                .iter()
                .zip(last)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                > 1e-3
        {
            return Ok(Some(out.solution));
        }
    }
    Ok(None)
}

/// Runs one of the three protocols and returns every branch in order.
pub fn trace_full_curve(
    problem: &Problem,
    regime: Regime,
    opts: &TraceOptions,
    cfg: &NewtonConfig,
) -> Result<Trace, ContinuationError> {
    let lambda1 = principal_lambda(problem)?;
    let stride = opts.store_stride;
    let plan = |from: f64, to: f64, guess: InitialGuess| {
        SweepPlan::new(from, to, guess)
            .with_delta_lambda(opts.delta_lambda)
            .with_store_stride(stride)
    };

    let l1 = match (regime, lambda1) {
        (Regime::NoFiniteBifurcation, Lambda1::Infinite) => {
            let b = sweep(
                problem,
                &plan(
                    opts.lambda0,
                    opts.lambda_min,
                    InitialGuess::EigenfunctionProfile(opts.amplitude),
                ),
                cfg,
            )?;
            return Ok(Trace {
                lambda1,
                delta_used: None,
                branches: vec![b],
            });
        }
        (Regime::NoFiniteBifurcation, Lambda1::Finite(_)) => {
            return Err(ContinuationError::RegimeNeedsInfiniteLambda1 { regime })
        }
        (_, Lambda1::Infinite) => {
            return Err(ContinuationError::RegimeNeedsFiniteLambda1 { regime })
        }
        (_, Lambda1::Finite(l)) => l,
    };

    let delta = opts.delta_offset.resolve(l1, opts.delta_lambda);
    let (delta_used, start) = first_solution_below(problem, l1, delta, opts, cfg)?;
    let lambda_start = l1 - delta_used;

    let left = sweep(
        problem,
        &plan(
            lambda_start,
            opts.lambda_min,
            InitialGuess::StoredSolution(start.clone()),
        ),
        cfg,
    )?;
    let mut branches = vec![left];

    match regime {
        Regime::Subcritical => {
            branches.push(sweep(
                problem,
                &plan(lambda_start, l1, InitialGuess::StoredSolution(start)),
                cfg,
            )?);
        }
        Regime::SupercriticalWithFold => {
            let lambda_max = opts.lambda_max.unwrap_or(2.0 * l1);
            let right = sweep(
                problem,
                &plan(
                    lambda_start,
                    lambda_max,
                    InitialGuess::StoredSolution(start),
                ),
                cfg,
            )?;
            let folded = matches!(right.termination, Termination::SolverFailed { .. });
            let hop = if folded {
                hop_across_fold(problem, &right, branches[0].points.get(1), cfg)?
            } else {
                None
            };
            let lambda_l = right.last().map(|p| p.lambda);
            branches.push(right);
            match (hop, lambda_l) {
                (Some(other), Some(lambda_l)) => {
                    // When the fold lies below λ₁ the second branch is
                    // followed left until it meets the trivial solution.
                    let end = if lambda_l > l1 { l1 } else { opts.lambda_min };
                    branches.push(sweep(
                        problem,
                        &plan(lambda_l, end, InitialGuess::StoredSolution(other)),
                        cfg,
                    )?);
                }
                (None, Some(lambda_l)) if folded => {
                    branches.push(Branch {
                        label: format!("Left sweep from {lambda_l} to {l1}"),
                        direction: Direction::Left,
                        points: Vec::new(),
                        termination: Termination::SolverFailed {
                            lambda_star: lambda_l,
                            lambda_l,
                        },
                    });
                }
                _ => {}
            }
        }
        Regime::NoFiniteBifurcation => unreachable!(),
    }

    Ok(Trace {
        lambda1,
        delta_used: Some(delta_used),
        branches,
    })
}

/// Where a branch meets the trivial solution.
///
/// If some point has `max_u` below `threshold`, `log(max_u)` is
/// interpolated linearly between it and its predecessor. Otherwise, for a
/// branch that ended by losing positivity, `max_u` is extrapolated linearly
/// from its last two points and the result clamped to the last step; with a
/// single point the midpoint of the last step is returned.
pub fn detect_bifurcation_lambda(
    branch: &Branch,
    threshold: f64,
) -> Result<f64, ContinuationError> {
    let pts = &branch.points;
    if let Some(i) = pts.iter().position(|p| p.max_u < threshold) {
        if i == 0 {
            return Ok(pts[0].lambda);
        }
        let (a, b) = (&pts[i - 1], &pts[i]);
        let (la, lb) = (a.max_u.ln(), b.max_u.ln());
        let t = (la - threshold.ln()) / (la - lb);
        return Ok(a.lambda + t * (b.lambda - a.lambda));
    }
    if let Termination::BelowPositivityFloor { lambda } = branch.termination {
        if pts.len() >= 2 {
            let (a, b) = (&pts[pts.len() - 2], &pts[pts.len() - 1]);
            let slope = (b.max_u - a.max_u) / (b.lambda - a.lambda);
            if slope != 0.0 && slope.is_finite() {
                let x = b.lambda + (threshold - b.max_u) / slope;
                let (lo, hi) = if b.lambda < lambda {
                    (b.lambda, lambda)
                } else {
                    (lambda, b.lambda)
                };
                return Ok(x.clamp(lo, hi));
            }
            return Ok(b.lambda);
        }
        if let Some(b) = pts.last() {
            // A single positive point: the crossing lies inside the last step.
            return Ok(0.5 * (b.lambda + lambda));
        }
    }
    Err(ContinuationError::NoBifurcation)
}
