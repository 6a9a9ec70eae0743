//! Principal eigenpairs of the linearized problems on (0, 1).
//!
//! For the single equation, linearizing at zero gives `-φ'' + φ = 0` with
//! `-φ'(0) = λ f'(0) φ(0)` and `φ'(1) = λ f'(0) φ(1)`. Writing
//! `φ = A cosh x + B sinh x` leaves a quadratic in `λ` whose smaller root is
//! the principal eigenvalue. The coupled problem gives a quadratic in
//! `σλ²` with `σ = f'(0) g'(0)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("derivative at zero must be nonnegative and finite, got {0}")]
    NegativeDerivative(f64),
    #[error("derivative at zero must be positive, got {0}")]
    ZeroDerivative(f64),
    #[error("the principal eigenvalue is infinite")]
    Infinite,
}

/// Principal eigenvalue; `Infinite` when the linearization has no
/// boundary coupling, so no branch leaves the trivial solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda1 {
    Finite(f64),
    Infinite,
}

impl Lambda1 {
    pub fn finite(self) -> Option<f64> {
        match self {
            Lambda1::Finite(v) => Some(v),
            Lambda1::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Lambda1::Infinite
    }
}

impl std::fmt::Display for Lambda1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lambda1::Finite(v) => write!(f, "{v:.16e}"),
            Lambda1::Infinite => write!(f, "infinite"),
        }
    }
}

fn check(d: f64) -> Result<(), EigenError> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(EigenError::NegativeDerivative(d))
    }
}

/// `tanh(1/2) = (cosh 1 - 1) / sinh 1`, the principal eigenvalue of the
/// unscaled boundary problem.
pub fn mu1() -> f64 {
    0.5f64.tanh()
}

pub fn lambda1_single(fprime0: f64) -> Result<Lambda1, EigenError> {
    check(fprime0)?;
    if fprime0 == 0.0 {
        return Ok(Lambda1::Infinite);
    }
    Ok(Lambda1::Finite(
        (1f64.cosh() - 1.0) / (fprime0 * 1f64.sinh()),
    ))
}

/// Both roots of `f'(0)² sinh(1) λ² - 2 f'(0) cosh(1) λ + sinh(1) = 0`,
/// ascending.
pub fn solve_for_lambda_quadratic(fprime0: f64) -> Result<(f64, f64), EigenError> {
    check(fprime0)?;
    if fprime0 == 0.0 {
        return Err(EigenError::ZeroDerivative(fprime0));
    }
    let denom = fprime0 * 1f64.sinh();
    Ok(((1f64.cosh() - 1.0) / denom, (1f64.cosh() + 1.0) / denom))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleEigenResult {
    pub lambda1: f64,
    pub a: f64,
    /// `B = -λ₁ f'(0) A`.
    pub b: f64,
}

impl SingleEigenResult {
    pub fn new(fprime0: f64, a: f64) -> Result<Self, EigenError> {
        let lambda1 = lambda1_single(fprime0)?
            .finite()
            .ok_or(EigenError::Infinite)?;
        Ok(Self {
            lambda1,
            a,
            b: -lambda1 * fprime0 * a,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.cosh() + self.b * x.sinh()
    }
}

/// `φ₁(x) = cosh x - tanh(1/2) sinh x`, normalized to max 1 on [0, 1].
/// It does not depend on `f'(0)`.
pub fn eigenfunction_single(x: f64) -> f64 {
    x.cosh() - (1f64.cosh() - 1.0) / 1f64.sinh() * x.sinh()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemEigenResult {
    pub lambda1: Lambda1,
    pub fprime0: f64,
    pub gprime0: f64,
    pub sigma: f64,
    pub a: f64,
    /// `v`-component amplitude at `x = 0`; NaN when `λ₁` is infinite.
    pub c: f64,
    /// `λ₁ √σ`; NaN when `λ₁` is infinite.
    pub mu1: f64,
}

/// Residual of `σ²λ⁴ + (2 - 4/tanh²(1)) σλ² + 1`.
pub fn system_quartic(sigma: f64, lambda: f64) -> f64 {
    let y = sigma * lambda * lambda;
    y * y + (2.0 - 4.0 / 1f64.tanh().powi(2)) * y + 1.0
}

/// Upper bound `√((2 / tanh²(1) - 1) / σ)` on the principal eigenvalue.
pub fn system_location_bound(sigma: f64) -> f64 {
    ((2.0 / 1f64.tanh().powi(2) - 1.0) / sigma).sqrt()
}

pub fn lambda1_system(fprime0: f64, gprime0: f64) -> Result<SystemEigenResult, EigenError> {
    lambda1_system_with_amplitude(fprime0, gprime0, 1.0)
}

pub fn lambda1_system_with_amplitude(
    fprime0: f64,
    gprime0: f64,
    a: f64,
) -> Result<SystemEigenResult, EigenError> {
    check(fprime0)?;
    check(gprime0)?;
    let sigma = fprime0 * gprime0;
    if sigma == 0.0 {
        return Ok(SystemEigenResult {
            lambda1: Lambda1::Infinite,
            fprime0,
            gprime0,
            sigma,
            a,
            c: f64::NAN,
            mu1: f64::NAN,
        });
    }
    // y = σλ² solves y² - b y + 1 = 0; the small root is written so that it
    // does not cancel.
    let b = 4.0 / 1f64.tanh().powi(2) - 2.0;
    let y = 2.0 / (b + (b * b - 4.0).sqrt());
    let lambda = (y / sigma).sqrt();
    let c = a * (1.0 + lambda * lambda * sigma) * 1f64.tanh() / (2.0 * lambda * fprime0);
    Ok(SystemEigenResult {
        lambda1: Lambda1::Finite(lambda),
        fprime0,
        gprime0,
        sigma,
        a,
        c,
        mu1: lambda * sigma.sqrt(),
    })
}

/// `(φ(x), ψ(x))` for the coupled eigenproblem at amplitude `a`.
pub fn eigenfunction_system(
    x: f64,
    res: &SystemEigenResult,
    a: f64,
) -> Result<(f64, f64), EigenError> {
    let lambda = res.lambda1.finite().ok_or(EigenError::Infinite)?;
    let s = 1.0 + lambda * lambda * res.sigma;
    let t = 1f64.tanh();
    let phi = a * (x.cosh() - 0.5 * s * t * x.sinh());
    let psi =
        a * (s / (2.0 * lambda * res.fprime0) * t * x.cosh() - lambda * res.gprime0 * x.sinh());
    Ok((phi, psi))
}
