//! Finite difference solvers for `-Δu + u = 0` with the nonlinear flux
//! condition `∂u/∂n = λ f(u)`, and for the coupled pair where `u` is driven
//! by `f(v)` and `v` by `g(u)`.
//!
//! The crate is layered bottom-up: [`grid`] and [`nonlinearity`] are pure
//! data, [`assembly`] builds residuals and Jacobians, [`solve`] runs Newton
//! and monotone iteration, [`eigen`] gives the closed-form principal
//! eigenpairs on the unit interval and [`continuation`] sweeps in `λ`.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod assembly;
pub mod continuation;
pub mod eigen;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nonlinearity;
pub mod solve;

#[cfg(test)]
pub(crate) mod test_util;

pub use assembly::{NonlinearSystem, Problem, SingleProblem, SystemProblem};
pub use grid::{Domain, Grid, GridFunction, NodeClass};
pub use linalg::SparseMatrix;
pub use nonlinearity::{CutoffParams, Polynomial};
