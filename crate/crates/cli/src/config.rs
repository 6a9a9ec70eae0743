//! Run configuration: JSON file plus `--set key=value` overrides.

use std::fmt;
use std::path::Path;

use bifurcate_core::continuation::{DeltaOffset, Regime, TraceOptions};
use bifurcate_core::grid::Grid;
use bifurcate_core::nonlinearity::{apriori_c, Polynomial};
use bifurcate_core::solve::NewtonConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in `{}`: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Single,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    NoFiniteBifurcation,
    Subcritical,
    SupercriticalWithFold,
}

impl From<RegimeName> for Regime {
    fn from(r: RegimeName) -> Self {
        match r {
            RegimeName::NoFiniteBifurcation => Regime::NoFiniteBifurcation,
            RegimeName::Subcritical => Regime::Subcritical,
            RegimeName::SupercriticalWithFold => Regime::SupercriticalWithFold,
        }
    }
}

/// A number, or a keyword such as `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOr {
    Number(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaOffsetValue {
    Absolute(f64),
    Fraction { fraction_of_lambda1: f64 },
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub regime: Option<RegimeName>,
    pub lambda_min: f64,
    pub lambda0: f64,
    pub lambda_max: Option<f64>,
    pub delta_lambda: f64,
    pub delta_offset: DeltaOffsetValue,
    pub amplitude: f64,
    pub store_stride: usize,
    pub nontrivial_threshold: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = TraceOptions::default();
        Self {
            regime: None,
            lambda_min: d.lambda_min,
            lambda0: d.lambda0,
            lambda_max: d.lambda_max,
            delta_lambda: d.delta_lambda,
            delta_offset: DeltaOffsetValue::Keyword("auto".into()),
            amplitude: d.amplitude,
            store_stride: d.store_stride,
            nontrivial_threshold: d.nontrivial_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    pub backtrack_factor: f64,
    pub min_step_fraction: f64,
    pub positivity_floor: f64,
}

impl Default for NewtonSection {
    fn default() -> Self {
        let d = NewtonConfig::default();
        Self {
            residual_tol: d.residual_tol,
            step_tol: d.step_tol,
            max_iters: d.max_iters,
            backtrack_factor: d.backtrack_factor,
            min_step_fraction: d.min_step_fraction,
            positivity_floor: d.positivity_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffSection {
    pub enabled: bool,
    pub rho: f64,
    #[serde(rename = "K")]
    pub k: NumberOr,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self {
            enabled: false,
            rho: 0.0,
            k: NumberOr::Keyword("auto".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessKind {
    Eigenfunction,
    Constant,
    Supersolution,
    Subsolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub method: Method,
    /// Newton uses `eigenfunction` or `constant`; the fixed-point
    /// iteration uses `supersolution` or `subsolution`.
    pub guess: GuessKind,
    pub amplitude: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            guess: GuessKind::Eigenfunction,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub profiles: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { profiles: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Test hook: flips the sign of one off-diagonal entry of `A`.
    pub corrupt_stencil: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(default = "unit_interval")]
    pub domain: [f64; 2],
    #[serde(rename = "M")]
    pub m: usize,
    pub f_coeffs: Vec<f64>,
    #[serde(default)]
    pub g_coeffs: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub cutoff: CutoffSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn one() -> f64 {
    1.0
}

/// Sets `path` (dotted) inside `root`, creating objects on the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::new(key, "empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(parts[..i].join("."), "not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!()
}

/// Parses the document after overrides, reporting the offending field.
pub fn from_value(value: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // Missing fields are reported against their parent; name them.
        let field = match inner.split('`').nth(1) {
            Some(name) if inner.starts_with("missing field") => {
                if path == "." {
                    name.to_string()
                } else {
                    format!("{path}.{name}")
                }
            }
            _ => path,
        };
        ConfigError::new(field, inner)
    })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
    let Some(obj) = value.as_object_mut() else {
        return Err(ConfigError::new("--config", "top level must be an object"));
    };
    // Echoed configs carry the mode they were run with; the command line wins.
    obj.remove("mode");
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg = from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(
            field,
            format!("must be a positive number, got {x}"),
        ))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let [a, b] = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ConfigError::new(
                "domain",
                format!("need a < b, got [{a}, {b}]"),
            ));
        }
        if self.m < 3 {
            return Err(ConfigError::new(
                "M",
                format!("need at least 3 nodes, got {}", self.m),
            ));
        }
        self.f()?;
        match (self.problem, &self.g_coeffs) {
            (ProblemKind::System, None) => {
                return Err(ConfigError::new(
                    "g_coeffs",
                    "required for problem = system",
                ))
            }
            (ProblemKind::System, Some(_)) => {
                self.g()?;
            }
            (ProblemKind::Single, _) => {}
        }
        positive("lambda", self.lambda)?;

        let s = &self.sweep;
        positive("sweep.lambda_min", s.lambda_min)?;
        positive("sweep.lambda0", s.lambda0)?;
        positive("sweep.delta_lambda", s.delta_lambda)?;
        positive("sweep.amplitude", s.amplitude)?;
        positive("sweep.nontrivial_threshold", s.nontrivial_threshold)?;
        if let Some(l) = s.lambda_max {
            positive("sweep.lambda_max", l)?;
        }
        if s.store_stride == 0 {
            return Err(ConfigError::new("sweep.store_stride", "must be at least 1"));
        }
        self.delta_offset()?;

        let n = &self.newton;
        positive("newton.residual_tol", n.residual_tol)?;
        positive("newton.step_tol", n.step_tol)?;
        positive("newton.min_step_fraction", n.min_step_fraction)?;
        if !(n.backtrack_factor > 0.0 && n.backtrack_factor < 1.0) {
            return Err(ConfigError::new(
                "newton.backtrack_factor",
                "must lie in (0, 1)",
            ));
        }
        if n.max_iters == 0 {
            return Err(ConfigError::new("newton.max_iters", "must be at least 1"));
        }
        if !(n.positivity_floor >= 0.0) {
            return Err(ConfigError::new("newton.positivity_floor", "must be >= 0"));
        }

        if self.cutoff.enabled {
            if !(self.cutoff.rho >= 0.0 && self.cutoff.rho.is_finite()) {
                return Err(ConfigError::new("cutoff.rho", "must be >= 0"));
            }
            match &self.cutoff.k {
                NumberOr::Number(k) => positive("cutoff.K", *k)?,
                NumberOr::Keyword(w) if w == "auto" => {
                    if self.problem == ProblemKind::System {
                        return Err(ConfigError::new(
                            "cutoff.K",
                            "\"auto\" needs the a-priori bound, which exists only for problem = single",
                        ));
                    }
                }
                NumberOr::Keyword(w) => {
                    return Err(ConfigError::new(
                        "cutoff.K",
                        format!("expected a number or \"auto\", got {w:?}"),
                    ))
                }
            }
        }
        if self.solve.method == Method::FixedPoint && !self.cutoff.enabled {
            return Err(ConfigError::new(
                "solve.method",
                "fixed_point requires cutoff.enabled = true",
            ));
        }
        positive("solve.amplitude", self.solve.amplitude)?;
        Ok(())
    }

    pub fn f(&self) -> Result<Polynomial, ConfigError> {
        Polynomial::new(self.f_coeffs.clone())
            .map_err(|e| ConfigError::new("f_coeffs", e.to_string()))
    }

    pub fn g(&self) -> Result<Polynomial, ConfigError> {
        let c = self
            .g_coeffs
            .clone()
            .ok_or_else(|| ConfigError::new("g_coeffs", "required for problem = system"))?;
        Polynomial::new(c).map_err(|e| ConfigError::new("g_coeffs", e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::interval(self.domain[0], self.domain[1], self.m)
            .map_err(|e| ConfigError::new("M", e.to_string()))
    }

    pub fn delta_offset(&self) -> Result<DeltaOffset, ConfigError> {
        let field = "sweep.delta_offset";
        match &self.sweep.delta_offset {
            DeltaOffsetValue::Absolute(d) => positive(field, *d).map(|_| DeltaOffset::Absolute(*d)),
            DeltaOffsetValue::Fraction {
                fraction_of_lambda1: q,
            } => {
                if *q > 0.0 && *q < 1.0 {
                    Ok(DeltaOffset::FractionOfLambda1(*q))
                } else {
                    Err(ConfigError::new(
                        field,
                        format!("fraction_of_lambda1 must lie in (0, 1), got {q}"),
                    ))
                }
            }
            DeltaOffsetValue::Keyword(w) if w == "auto" => Ok(DeltaOffset::Auto),
            DeltaOffsetValue::Keyword(w) => Err(ConfigError::new(
                field,
                format!("expected a number, {{\"fraction_of_lambda1\": q}} or \"auto\", got {w:?}"),
            )),
        }
    }

    pub fn newton_config(&self) -> NewtonConfig {
        let n = &self.newton;
        NewtonConfig {
            residual_tol: n.residual_tol,
            step_tol: n.step_tol,
            max_iters: n.max_iters,
            backtrack_factor: n.backtrack_factor,
            min_step_fraction: n.min_step_fraction,
            positivity_floor: n.positivity_floor,
        }
    }

    pub fn trace_options(&self) -> Result<TraceOptions, ConfigError> {
        let s = &self.sweep;
        Ok(TraceOptions {
            lambda_min: s.lambda_min,
            lambda0: s.lambda0,
            delta_lambda: s.delta_lambda,
            delta_offset: self.delta_offset()?,
            amplitude: s.amplitude,
            lambda_max: s.lambda_max,
            store_stride: s.store_stride,
            nontrivial_threshold: s.nontrivial_threshold,
        })
    }

    /// Replaces `"auto"` cutoff levels by `apriori_C · h* / h_*` at the
    /// configured `lambda`.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.cutoff.enabled && matches!(self.cutoff.k, NumberOr::Keyword(_)) {
            let grid = self.grid()?;
            let c = apriori_c(&self.f()?, self.lambda, grid.h_star_min())
                .map_err(|e| ConfigError::new("cutoff.K", e.to_string()))?;
            self.cutoff.k = NumberOr::Number(c * grid.h_star_max() / grid.h_star_min());
        }
        Ok(self)
    }

    pub fn cutoff_k(&self) -> Option<f64> {
        match (self.cutoff.enabled, &self.cutoff.k) {
            (true, NumberOr::Number(k)) => Some(*k),
            _ => None,
        }
    }
}
