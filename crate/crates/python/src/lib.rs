//! Python module `bifurcate`.

use bifurcate_core::assembly::{NonlinearSystem, Problem, SingleProblem, SystemProblem};
use bifurcate_core::continuation::{
    detect_bifurcation_lambda, trace_full_curve, Branch, DeltaOffset, Direction, InitialGuess,
    Regime, Termination, TraceOptions,
};
use bifurcate_core::eigen::{
    lambda1_single as core_lambda1_single, lambda1_system as core_lambda1_system,
};
use bifurcate_core::grid::Grid;
use bifurcate_core::io::node_x;
use bifurcate_core::nonlinearity::{apriori_c as core_apriori_c, Polynomial};
use bifurcate_core::solve::{newton_solve, NewtonConfig, SolveOutcome};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

#[pyclass(name = "Polynomial", module = "bifurcate", frozen)]
struct PyPolynomial {
    inner: Polynomial,
}

#[pymethods]
impl PyPolynomial {
    /// Coefficients in ascending degree.
    #[new]
    fn new(coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: Polynomial::new(coeffs).map_err(value_err)?,
        })
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    fn __call__(&self, s: f64) -> f64 {
        self.inner.eval(s)
    }

    fn derivative(&self, s: f64) -> f64 {
        self.inner.eval_deriv(s)
    }

    fn __repr__(&self) -> String {
        format!("Polynomial({:?})", self.inner.coeffs())
    }
}

#[pyclass(name = "Grid", module = "bifurcate", frozen)]
struct PyGrid {
    inner: Grid,
}

#[pymethods]
impl PyGrid {
    /// Uniform grid with `m` nodes on `[a, b]`.
    #[new]
    #[pyo3(signature = (m, a = 0.0, b = 1.0))]
    fn new(m: usize, a: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Grid::interval(a, b, m).map_err(value_err)?,
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn h_star_max(&self) -> f64 {
        self.inner.h_star_max()
    }

    #[getter]
    fn h_star_min(&self) -> f64 {
        self.inner.h_star_min()
    }

    fn nodes(&self) -> Vec<f64> {
        node_x(&self.inner)
    }

    fn __repr__(&self) -> String {
        let [(a, b)] = self.inner.domain().bounds() else {
            return "Grid(...)".into();
        };
        format!("Grid(m={}, a={a}, b={b})", self.inner.num_nodes())
    }
}

#[pyclass(name = "Problem", module = "bifurcate", frozen)]
struct PyProblem {
    inner: Problem,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn single(grid: &PyGrid, f: &PyPolynomial, lam: f64) -> PyResult<Self> {
        let p = SingleProblem::new(grid.inner.clone(), f.inner.clone(), lam).map_err(value_err)?;
        Ok(Self { inner: p.into() })
    }

    #[staticmethod]
    fn system(grid: &PyGrid, f: &PyPolynomial, g: &PyPolynomial, lam: f64) -> PyResult<Self> {
        let p = SystemProblem::new(grid.inner.clone(), f.inner.clone(), g.inner.clone(), lam)
            .map_err(value_err)?;
        Ok(Self { inner: p.into() })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn is_system(&self) -> bool {
        self.inner.is_system()
    }

    fn with_lambda(&self, lam: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_lambda(lam).map_err(value_err)?,
        })
    }

    fn residual(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.residual(&x).map_err(value_err)
    }

    /// Dense Jacobian as a list of rows.
    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.jacobian(&x).map_err(value_err)?.to_dense())
    }

    /// Eigenfunction-shaped initial guess with the given amplitude.
    #[pyo3(signature = (amplitude = 1.0))]
    fn eigen_guess(&self, amplitude: f64) -> PyResult<Vec<f64>> {
        InitialGuess::EigenfunctionProfile(amplitude)
            .realize(&self.inner)
            .map_err(value_err)
    }
}

#[pyclass(name = "SolveResult", module = "bifurcate", frozen, get_all)]
struct PySolveResult {
    status: String,
    converged: bool,
    solution: Vec<f64>,
    iters: usize,
    residual: f64,
    positive: bool,
    max_on_boundary: bool,
    apriori_ok: bool,
    cutoff_inactive: bool,
}

impl From<SolveOutcome> for PySolveResult {
    fn from(o: SolveOutcome) -> Self {
        let c = o.certificates;
        Self {
            status: format!("{:?}", o.status),
            converged: o.converged(),
            solution: o.solution,
            iters: o.iters,
            residual: o.final_residual_norm,
            positive: c.positive,
            max_on_boundary: c.max_on_boundary,
            apriori_ok: c.apriori_ok,
            cutoff_inactive: c.cutoff_inactive,
        }
    }
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status={}, iters={}, residual={:e})",
            self.status, self.iters, self.residual
        )
    }
}

#[pyclass(name = "Branch", module = "bifurcate", frozen)]
struct PyBranch {
    inner: Branch,
}

#[pymethods]
impl PyBranch {
    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        match self.inner.direction {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.lambda).collect()
    }

    #[getter]
    fn max_u(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.max_u).collect()
    }

    #[getter]
    fn max_v(&self) -> Option<Vec<f64>> {
        self.inner.points.iter().map(|p| p.max_v).collect()
    }

    /// `(kind, value)` where `value` is `lambda_l` after a solver failure,
    /// the floor crossing for `below_positivity_floor` and `None` otherwise.
    #[getter]
    fn termination(&self) -> (&'static str, Option<f64>) {
        match self.inner.termination {
            Termination::ReachedEnd => ("reached_end", None),
            Termination::SolverFailed { lambda_l, .. } => ("solver_failed", Some(lambda_l)),
            Termination::BelowPositivityFloor { lambda } => {
                ("below_positivity_floor", Some(lambda))
            }
        }
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Branch({:?}, {} points)",
            self.inner.label,
            self.inner.points.len()
        )
    }
}

/// `None` stands for an infinite principal eigenvalue.
#[pyfunction]
fn lambda1_single(fprime0: f64) -> PyResult<Option<f64>> {
    Ok(core_lambda1_single(fprime0).map_err(value_err)?.finite())
}

/// `(lambda1, c)`; both `None` when `f'(0) g'(0) = 0`.
#[pyfunction]
fn lambda1_system(fprime0: f64, gprime0: f64) -> PyResult<(Option<f64>, Option<f64>)> {
    let r = core_lambda1_system(fprime0, gprime0).map_err(value_err)?;
    let l = r.lambda1.finite();
    Ok((l, l.map(|_| r.c)))
}

#[pyfunction]
fn apriori_c(f: &PyPolynomial, lam: f64, h_star_min: f64) -> PyResult<f64> {
    core_apriori_c(&f.inner, lam, h_star_min).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (problem, guess, residual_tol = 1e-6, step_tol = 1e-6, max_iters = 100))]
fn solve(
    problem: &PyProblem,
    guess: Vec<f64>,
    residual_tol: f64,
    step_tol: f64,
    max_iters: usize,
) -> PyResult<PySolveResult> {
    let cfg = NewtonConfig {
        residual_tol,
        step_tol,
        max_iters,
        ..Default::default()
    };
    Ok(newton_solve(&problem.inner, &guess, &cfg)
        .map_err(value_err)?
        .into())
}

/// Runs a continuation protocol: `regime` is one of
/// `no_finite_bifurcation`, `subcritical`, `supercritical_with_fold`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (problem, regime, lambda_min = 0.01, lambda0 = 3.0, delta_lambda = 1e-3, delta_offset = None, lambda_max = None))]
fn trace(
    py: Python<'_>,
    problem: &PyProblem,
    regime: &str,
    lambda_min: f64,
    lambda0: f64,
    delta_lambda: f64,
    delta_offset: Option<f64>,
    lambda_max: Option<f64>,
) -> PyResult<Vec<PyBranch>> {
    let regime = match regime {
        "no_finite_bifurcation" => Regime::NoFiniteBifurcation,
        "subcritical" => Regime::Subcritical,
        "supercritical_with_fold" => Regime::SupercriticalWithFold,
        other => return Err(PyValueError::new_err(format!("unknown regime {other:?}"))),
    };
    let opts = TraceOptions {
        lambda_min,
        lambda0,
        delta_lambda,
        delta_offset: delta_offset.map_or(DeltaOffset::Auto, DeltaOffset::Absolute),
        lambda_max,
        ..Default::default()
    };
    let p = &problem.inner;
    let t = py
        .detach(|| trace_full_curve(p, regime, &opts, &NewtonConfig::default()))
        .map_err(runtime_err)?;
    Ok(t.branches
        .into_iter()
        .map(|inner| PyBranch { inner })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (branch, threshold = 1e-3))]
fn detect_bifurcation(branch: &PyBranch, threshold: f64) -> PyResult<f64> {
    detect_bifurcation_lambda(&branch.inner, threshold).map_err(runtime_err)
}

#[pymodule]
fn bifurcate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolynomial>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyBranch>()?;
    m.add_function(wrap_pyfunction!(lambda1_single, m)?)?;
    m.add_function(wrap_pyfunction!(lambda1_system, m)?)?;
    m.add_function(wrap_pyfunction!(apriori_c, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(detect_bifurcation, m)?)?;
    Ok(())
}
