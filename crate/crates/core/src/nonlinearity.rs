//! Polynomial boundary fluxes, the clamped flux used by the sub/supersolution
//! argument, and the a-priori bound on nonnegative discrete solutions.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("polynomial needs at least one coefficient")]
    Empty,
    #[error("coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("flux is only defined for s >= 0, got {0}")]
    NegativeArgument(f64),
    #[error(
        "a-priori bound requires superlinear growth (degree >= 2, positive leading coefficient)"
    )]
    NotSuperlinear,
    #[error("invalid cutoff parameters: {0}")]
    InvalidCutoff(String),
}

/// `f(s) = c_0 + c_1 s + ... + c_d s^d`, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Trailing zero coefficients are dropped so that `degree()` and
    /// `leading_coefficient()` describe the actual growth.
    pub fn new(coeffs: Vec<f64>) -> Result<Self, NonlinearityError> {
        if coeffs.is_empty() {
            return Err(NonlinearityError::Empty);
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(NonlinearityError::NonFinite { index });
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading_coefficient(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_deriv(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * s + k as f64 * c)
    }

    pub fn derivative_at_zero(&self) -> f64 {
        self.coeffs.get(1).copied().unwrap_or(0.0)
    }

    pub fn value_at_zero(&self) -> f64 {
        self.coeffs[0]
    }

    /// Superlinear growth: degree at least 2 with positive leading coefficient.
    pub fn is_superlinear(&self) -> bool {
        self.degree() >= 2 && self.leading_coefficient() > 0.0
    }
}

/// Clamp band `[rho / lambda, K / (lambda h*)]` for the flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffParams {
    pub rho: f64,
    pub k: f64,
    pub lambda: f64,
    pub h_star_max: f64,
}

impl CutoffParams {
    /// `h_star_min` is only used to validate `rho < K / h_*`.
    pub fn new(
        rho: f64,
        k: f64,
        lambda: f64,
        h_star_max: f64,
        h_star_min: f64,
    ) -> Result<Self, NonlinearityError> {
        let bad = |msg: String| Err(NonlinearityError::InvalidCutoff(msg));
        if !(rho >= 0.0 && rho.is_finite()) {
            return bad(format!("rho must be >= 0, got {rho}"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return bad(format!("K must be > 0, got {k}"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return bad(format!("lambda must be > 0, got {lambda}"));
        }
        if !(h_star_max > 0.0 && h_star_min > 0.0 && h_star_min <= h_star_max) {
            return bad(format!(
                "spacings must satisfy 0 < h_* <= h*, got h_* = {h_star_min}, h* = {h_star_max}"
            ));
        }
        if rho > 0.0 && rho >= k / h_star_min {
            return bad(format!(
                "rho = {rho} must be below K / h_* = {}",
                k / h_star_min
            ));
        }
        if rho > k / h_star_max {
            return bad("lower clamp rho / lambda exceeds upper clamp K / (lambda h*)".into());
        }
        Ok(Self {
            rho,
            k,
            lambda,
            h_star_max,
        })
    }

    pub fn lower(&self) -> f64 {
        self.rho / self.lambda
    }

    pub fn upper(&self) -> f64 {
        self.k / (self.lambda * self.h_star_max)
    }
}

/// Which branch of the clamp is active at a given argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampState {
    Lower,
    Inactive,
    Upper,
}

pub fn clamp_state(
    f: &Polynomial,
    params: &CutoffParams,
    s: f64,
) -> Result<ClampState, NonlinearityError> {
    if s < 0.0 || s.is_nan() {
        return Err(NonlinearityError::NegativeArgument(s));
    }
    let value = f.eval(s);
    Ok(if value > params.upper() {
        ClampState::Upper
    } else if value < params.lower() {
        ClampState::Lower
    } else {
        ClampState::Inactive
    })
}

/// The clamped flux `f~(s)`.
pub fn cutoff_eval(
    f: &Polynomial,
    params: &CutoffParams,
    s: f64,
) -> Result<f64, NonlinearityError> {
    Ok(match clamp_state(f, params, s)? {
        ClampState::Upper => params.upper(),
        ClampState::Lower => params.lower(),
        ClampState::Inactive => f.eval(s),
    })
}

/// Derivative of the clamped flux; zero on clamped branches.
pub fn cutoff_eval_deriv(
    f: &Polynomial,
    params: &CutoffParams,
    s: f64,
) -> Result<f64, NonlinearityError> {
    Ok(match clamp_state(f, params, s)? {
        ClampState::Inactive => f.eval_deriv(s),
        _ => 0.0,
    })
}

/// True iff `f(s) = f~(s)` at every supplied boundary value, in which case a
/// solution of the clamped problem also solves the unmodified one.
pub fn cutoff_inactive(f: &Polynomial, params: &CutoffParams, u_boundary: &[f64]) -> bool {
    u_boundary
        .iter()
        .all(|&s| matches!(clamp_state(f, params, s), Ok(ClampState::Inactive)))
}

/// Smallest `C >= 0` with `f(s) / s > 1 / (lambda h_*)` for every `s > C`.
///
/// This is the largest nonnegative root of `q(s) = f(s) - s / (lambda h_*)`.
/// All real roots lie below the Cauchy bound of `q`, so `[0, R]` is scanned
/// from the top for the last point where `q <= 0` and that cell is bisected
/// to a relative width of 1e-12.
pub fn apriori_c(f: &Polynomial, lambda: f64, h_star_min: f64) -> Result<f64, NonlinearityError> {
    if !f.is_superlinear() {
        return Err(NonlinearityError::NotSuperlinear);
    }
    assert!(
        lambda > 0.0 && h_star_min > 0.0,
        "lambda and h_* must be positive"
    );
    let slope = 1.0 / (lambda * h_star_min);
    let mut q_coeffs = f.coeffs().to_vec();
    q_coeffs[1] -= slope;
    let q = Polynomial { coeffs: q_coeffs };

    let lead = q.leading_coefficient();
    let cauchy = 1.0
        + q.coeffs()[..q.degree()]
            .iter()
            .fold(0.0f64, |m, c| m.max((c / lead).abs()));

    // Sign of q just above zero: the first nonzero coefficient decides.
    let sign_at_zero = q
        .coeffs()
        .iter()
        .find(|&&c| c != 0.0)
        .map(|c| c.signum())
        .unwrap_or(1.0);

    const CELLS: usize = 4096;
    let at = |i: usize| cauchy * i as f64 / CELLS as f64;
    let nonpositive = |i: usize| {
        if i == 0 {
            sign_at_zero <= 0.0
        } else {
            q.eval(at(i)) <= 0.0
        }
    };
    let Some(last) = (0..CELLS).rev().find(|&i| nonpositive(i)) else {
        return Ok(0.0);
    };
    let (mut lo, mut hi) = (at(last), at(last + 1));
    while hi - lo > 1e-12 * hi.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if q.eval(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Levels `(M_K, M_K + K)` of the constant supersolution, interior and
/// boundary respectively, with `M_K = 2 N K / h_*^2`.
pub fn supersolution_level(k: f64, dim: usize, h_star_min: f64) -> (f64, f64) {
    let m_k = 2.0 * dim as f64 * k / (h_star_min * h_star_min);
    (m_k, m_k + k)
}
