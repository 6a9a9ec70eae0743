//! Residuals, exact Jacobians and the linear boundary-value operator.
//!
//! Every node owns one row. Interior rows discretize `-Δu + u`, smooth
//! boundary rows the outward normal derivative, so the linear part of every
//! residual is the matrix `A` from [`assemble_a`]; the nonlinearity only
//! enters through `-λ f(·)` on the smooth boundary rows.
//!
//! Corner nodes (N >= 2) carry no equation of their own. They are closed by
//! requiring the corner value to equal the mean of its adjacent smooth
//! boundary neighbours (or of all neighbours when none is smooth, as for the
//! vertices of a 3-box). This closure is an implementation convention that
//! keeps the system square; it does not come from the discrete problem.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Grid, NodeClass};
use crate::linalg::SparseMatrix;
use crate::nonlinearity::{
    cutoff_eval, cutoff_eval_deriv, CutoffParams, NonlinearityError, Polynomial,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("expected {expected} unknowns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("cutoff parameters do not match the problem: {0}")]
    CutoffMismatch(String),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

/// `A` plus the bookkeeping needed to add boundary fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub matrix: SparseMatrix,
    /// Flat indices of smooth boundary nodes, ascending.
    pub boundary: Vec<usize>,
}

impl LinearOperator {
    pub fn new(grid: &Grid) -> Self {
        let boundary = (0..grid.num_nodes())
            .filter(|&k| grid.classify_flat(k).is_smooth_boundary())
            .collect();
        Self {
            matrix: assemble_a(grid),
            boundary,
        }
    }
}

/// Linear operator of the fixed-point map: `-Δ_h + I` on interior rows,
/// the discrete outward normal derivative on smooth boundary rows and the
/// corner closure on corner rows.
pub fn assemble_a(grid: &Grid) -> SparseMatrix {
    let n = grid.num_nodes();
    let h = grid.spacings();
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * grid.dim() + 1);
        match grid.classify_flat(k) {
            NodeClass::Interior => {
                let mut diag = 1.0;
                for (axis, &hi) in h.iter().enumerate() {
                    let w = 1.0 / (hi * hi);
                    diag += 2.0 * w;
                    for off in [-1, 1] {
                        let nb = grid
                            .neighbour(k, axis, off)
                            .expect("interior node has neighbours");
                        row.push((nb, -w));
                    }
                }
                row.push((k, diag));
            }
            class @ NodeClass::SmoothBoundary { .. } => {
                let (axis, sign) = class.normal_axis().expect("smooth node has a normal");
                // Outward +1 uses delta^-, outward -1 uses -delta^+; both
                // give (u(a) - u(a inward)) / h.
                let inward = grid
                    .neighbour(k, axis, -sign)
                    .expect("inward neighbour exists");
                let w = 1.0 / h[axis];
                row.push((k, w));
                row.push((inward, -w));
            }
            NodeClass::Corner => {
                let neighbours: Vec<usize> = (0..grid.dim())
                    .flat_map(|axis| [-1i8, 1].map(|off| grid.neighbour(k, axis, off)))
                    .flatten()
                    .collect();
                let smooth: Vec<usize> = neighbours
                    .iter()
                    .copied()
                    .filter(|&nb| grid.classify_flat(nb).is_smooth_boundary())
                    .collect();
                let used = if smooth.is_empty() {
                    neighbours
                } else {
                    smooth
                };
                let w = 1.0 / used.len() as f64;
                row.push((k, 1.0));
                for nb in used {
                    row.push((nb, -w));
                }
            }
        }
        rows.push(row);
    }
    SparseMatrix::from_rows(rows)
}

/// Anything Newton can iterate on.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, AssemblyError>;
    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix, AssemblyError>;
    /// Bandwidth-reducing ordering for the direct solver (`new -> old`).
    fn ordering(&self) -> Option<Vec<usize>> {
        None
    }
}

fn check_lambda(lambda: f64) -> Result<(), AssemblyError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(AssemblyError::InvalidLambda(lambda))
    }
}

fn check_cutoff(cutoff: &CutoffParams, grid: &Grid, lambda: f64) -> Result<(), AssemblyError> {
    if cutoff.lambda != lambda {
        return Err(AssemblyError::CutoffMismatch(format!(
            "cutoff lambda {} differs from problem lambda {}",
            cutoff.lambda, lambda
        )));
    }
    if cutoff.h_star_max != grid.h_star_max() {
        return Err(AssemblyError::CutoffMismatch(format!(
            "cutoff h* {} differs from grid h* {}",
            cutoff.h_star_max,
            grid.h_star_max()
        )));
    }
    Ok(())
}

fn flux(f: &Polynomial, cutoff: Option<&CutoffParams>, s: f64) -> Result<f64, AssemblyError> {
    Ok(match cutoff {
        Some(c) => cutoff_eval(f, c, s)?,
        None => f.eval(s),
    })
}

fn flux_deriv(f: &Polynomial, cutoff: Option<&CutoffParams>, s: f64) -> Result<f64, AssemblyError> {
    Ok(match cutoff {
        Some(c) => cutoff_eval_deriv(f, c, s)?,
        None => f.eval_deriv(s),
    })
}

/// `-Δ_h u + u = 0` inside, `∇*_h u · n - λ f(u) = 0` on the smooth boundary.
#[derive(Debug, Clone)]
pub struct SingleProblem {
    grid: Arc<Grid>,
    op: Arc<LinearOperator>,
    f: Polynomial,
    lambda: f64,
    cutoff: Option<CutoffParams>,
}

impl SingleProblem {
    pub fn new(grid: Grid, f: Polynomial, lambda: f64) -> Result<Self, AssemblyError> {
        check_lambda(lambda)?;
        let op = Arc::new(LinearOperator::new(&grid));
        Ok(Self {
            grid: Arc::new(grid),
            op,
            f,
            lambda,
            cutoff: None,
        })
    }

    /// Replaces `f` by the clamped flux. The cutoff's `lambda` and `h*` must
    /// match the problem.
    pub fn with_cutoff(mut self, cutoff: CutoffParams) -> Result<Self, AssemblyError> {
        check_cutoff(&cutoff, &self.grid, self.lambda)?;
        self.cutoff = Some(cutoff);
        Ok(self)
    }

    /// Same grid and flux at another parameter value. A cutoff follows the
    /// new `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, AssemblyError> {
        check_lambda(lambda)?;
        let mut next = self.clone();
        next.lambda = lambda;
        if let Some(c) = next.cutoff.as_mut() {
            c.lambda = lambda;
        }
        Ok(next)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.op
    }

    pub fn f(&self) -> &Polynomial {
        &self.f
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cutoff(&self) -> Option<&CutoffParams> {
        self.cutoff.as_ref()
    }

    /// Right-hand side of the fixed-point map: `λ f~(v)` on boundary rows.
    pub fn boundary_rhs(&self, v: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_len(v)?;
        let mut b = vec![0.0; v.len()];
        for &k in &self.op.boundary {
            b[k] = self.lambda * flux(&self.f, self.cutoff.as_ref(), v[k])?;
        }
        Ok(b)
    }

    fn check_len(&self, u: &[f64]) -> Result<(), AssemblyError> {
        let n = self.grid.num_nodes();
        if u.len() != n {
            return Err(AssemblyError::Dimension {
                expected: n,
                got: u.len(),
            });
        }
        Ok(())
    }
}

pub fn residual_single(p: &SingleProblem, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
    p.check_len(u)?;
    let mut r = p.op.matrix.mul_vec(u);
    for &k in &p.op.boundary {
        r[k] -= p.lambda * flux(&p.f, p.cutoff.as_ref(), u[k])?;
    }
    Ok(r)
}

pub fn jacobian_single(p: &SingleProblem, u: &[f64]) -> Result<SparseMatrix, AssemblyError> {
    p.check_len(u)?;
    let mut j = p.op.matrix.clone();
    for &k in &p.op.boundary {
        *j.entry_mut(k, k) -= p.lambda * flux_deriv(&p.f, p.cutoff.as_ref(), u[k])?;
    }
    Ok(j)
}

impl NonlinearSystem for SingleProblem {
    fn dim(&self) -> usize {
        self.grid.num_nodes()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        residual_single(self, x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix, AssemblyError> {
        jacobian_single(self, x)
    }
}

/// Coupled pair: `u` is driven by `λ f(v)` and `v` by `λ g(u)` on the
/// boundary. Unknowns are concatenated as `w = (u; v)`.
#[derive(Debug, Clone)]
pub struct SystemProblem {
    grid: Arc<Grid>,
    op: Arc<LinearOperator>,
    f: Polynomial,
    g: Polynomial,
    lambda: f64,
    cutoffs: Option<(CutoffParams, CutoffParams)>,
}

impl SystemProblem {
    pub fn new(
        grid: Grid,
        f: Polynomial,
        g: Polynomial,
        lambda: f64,
    ) -> Result<Self, AssemblyError> {
        check_lambda(lambda)?;
        let op = Arc::new(LinearOperator::new(&grid));
        Ok(Self {
            grid: Arc::new(grid),
            op,
            f,
            g,
            lambda,
            cutoffs: None,
        })
    }

    pub fn with_cutoffs(
        mut self,
        cf: CutoffParams,
        cg: CutoffParams,
    ) -> Result<Self, AssemblyError> {
        check_cutoff(&cf, &self.grid, self.lambda)?;
        check_cutoff(&cg, &self.grid, self.lambda)?;
        self.cutoffs = Some((cf, cg));
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, AssemblyError> {
        check_lambda(lambda)?;
        let mut next = self.clone();
        next.lambda = lambda;
        if let Some((cf, cg)) = next.cutoffs.as_mut() {
            cf.lambda = lambda;
            cg.lambda = lambda;
        }
        Ok(next)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.op
    }

    pub fn f(&self) -> &Polynomial {
        &self.f
    }

    pub fn g(&self) -> &Polynomial {
        &self.g
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cutoffs(&self) -> Option<&(CutoffParams, CutoffParams)> {
        self.cutoffs.as_ref()
    }

    fn nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    /// Right-hand side of the fixed-point map for `w = (u; v)`:
    /// `λ f~(v)` on the u-block and `λ g~(u)` on the v-block boundary rows.
    pub fn boundary_rhs(&self, w: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_len(w)?;
        let n = self.nodes();
        let (u, v) = w.split_at(n);
        let (cf, cg) = match &self.cutoffs {
            Some((cf, cg)) => (Some(cf), Some(cg)),
            None => (None, None),
        };
        let mut b = vec![0.0; 2 * n];
        for &k in &self.op.boundary {
            b[k] = self.lambda * flux(&self.f, cf, v[k])?;
            b[n + k] = self.lambda * flux(&self.g, cg, u[k])?;
        }
        Ok(b)
    }

    fn check_len(&self, w: &[f64]) -> Result<(), AssemblyError> {
        let n = 2 * self.nodes();
        if w.len() != n {
            return Err(AssemblyError::Dimension {
                expected: n,
                got: w.len(),
            });
        }
        Ok(())
    }
}

pub fn residual_system(p: &SystemProblem, w: &[f64]) -> Result<Vec<f64>, AssemblyError> {
    p.check_len(w)?;
    let n = p.nodes();
    let (u, v) = w.split_at(n);
    let (cf, cg) = match &p.cutoffs {
        Some((cf, cg)) => (Some(cf), Some(cg)),
        None => (None, None),
    };
    let mut r = p.op.matrix.mul_vec(u);
    r.extend(p.op.matrix.mul_vec(v));
    for &k in &p.op.boundary {
        r[k] -= p.lambda * flux(&p.f, cf, v[k])?;
        r[n + k] -= p.lambda * flux(&p.g, cg, u[k])?;
    }
    Ok(r)
}

pub fn jacobian_system(p: &SystemProblem, w: &[f64]) -> Result<SparseMatrix, AssemblyError> {
    p.check_len(w)?;
    let n = p.nodes();
    let (u, v) = w.split_at(n);
    let (cf, cg) = match &p.cutoffs {
        Some((cf, cg)) => (Some(cf), Some(cg)),
        None => (None, None),
    };
    let a = &p.op.matrix;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(2 * n);
    for block in 0..2 {
        for i in 0..n {
            rows.push(a.row(i).map(|(j, val)| (block * n + j, val)).collect());
        }
    }
    for &k in &p.op.boundary {
        rows[k].push((n + k, -p.lambda * flux_deriv(&p.f, cf, v[k])?));
        rows[n + k].push((k, -p.lambda * flux_deriv(&p.g, cg, u[k])?));
    }
    Ok(SparseMatrix::from_rows(rows))
}

impl NonlinearSystem for SystemProblem {
    fn dim(&self) -> usize {
        2 * self.nodes()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        residual_system(self, x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix, AssemblyError> {
        jacobian_system(self, x)
    }

    /// Interleaves `u_i` and `v_i` so the coupling entries sit next to the
    /// diagonal.
    fn ordering(&self) -> Option<Vec<usize>> {
        let n = self.nodes();
        Some((0..2 * n).map(|k| (k % 2) * n + k / 2).collect())
    }
}

/// Either problem class, at a fixed parameter value.
#[derive(Debug, Clone)]
pub enum Problem {
    Single(SingleProblem),
    System(SystemProblem),
}

impl Problem {
    pub fn grid(&self) -> &Grid {
        match self {
            Problem::Single(p) => p.grid(),
            Problem::System(p) => p.grid(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Problem::Single(p) => p.lambda(),
            Problem::System(p) => p.lambda(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, AssemblyError> {
        Ok(match self {
            Problem::Single(p) => Problem::Single(p.with_lambda(lambda)?),
            Problem::System(p) => Problem::System(p.with_lambda(lambda)?),
        })
    }

    /// Number of solution components (1 or 2).
    pub fn components(&self) -> usize {
        match self {
            Problem::Single(_) => 1,
            Problem::System(_) => 2,
        }
    }

    pub fn uses_cutoff(&self) -> bool {
        match self {
            Problem::Single(p) => p.cutoff().is_some(),
            Problem::System(p) => p.cutoffs().is_some(),
        }
    }

    pub fn is_system(&self) -> bool {
        matches!(self, Problem::System(_))
    }
}

impl From<SingleProblem> for Problem {
    fn from(p: SingleProblem) -> Self {
        Problem::Single(p)
    }
}

impl From<SystemProblem> for Problem {
    fn from(p: SystemProblem) -> Self {
        Problem::System(p)
    }
}

impl NonlinearSystem for Problem {
    fn dim(&self) -> usize {
        match self {
            Problem::Single(p) => p.dim(),
            Problem::System(p) => p.dim(),
        }
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        match self {
            Problem::Single(p) => p.residual(x),
            Problem::System(p) => p.residual(x),
        }
    }

    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix, AssemblyError> {
        match self {
            Problem::Single(p) => p.jacobian(x),
            Problem::System(p) => p.jacobian(x),
        }
    }

    fn ordering(&self) -> Option<Vec<usize>> {
        match self {
            Problem::Single(p) => p.ordering(),
            Problem::System(p) => p.ordering(),
        }
    }
}
