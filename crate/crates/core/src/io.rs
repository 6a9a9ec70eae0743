//! CSV output for curves, profiles and eigenfunctions.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::continuation::{Branch, Direction, Termination};
use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Malformed(String),
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64, IoError> {
    s.trim()
        .parse()
        .map_err(|_| IoError::Malformed(format!("not a number: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool, IoError> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(IoError::Malformed(format!("not a boolean: {other:?}"))),
    }
}

pub fn curve_header(system: bool) -> Vec<&'static str> {
    let mut h = vec!["branch_id", "lambda", "max_u"];
    if system {
        h.push("max_v");
    }
    h.extend([
        "iters",
        "residual",
        "positive",
        "max_on_boundary",
        "apriori_ok",
        "cutoff_inactive",
    ]);
    h
}

/// One row per branch point, branches numbered from 0.
pub fn write_curve<W: Write>(out: W, branches: &[Branch], system: bool) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(curve_header(system))?;
    for (id, b) in branches.iter().enumerate() {
        for p in &b.points {
            let mut row = vec![id.to_string(), fmt_f64(p.lambda), fmt_f64(p.max_u)];
            if system {
                row.push(fmt_f64(p.max_v.unwrap_or(f64::NAN)));
            }
            let c = p.certificates;
            row.extend([
                p.iters.to_string(),
                fmt_f64(p.residual),
                c.positive.to_string(),
                c.max_on_boundary.to_string(),
                c.apriori_ok.to_string(),
                c.cutoff_inactive.to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub branch_id: usize,
    pub lambda: f64,
    pub max_u: f64,
    pub max_v: Option<f64>,
    pub iters: usize,
    pub residual: f64,
    pub positive: bool,
    pub max_on_boundary: bool,
    pub apriori_ok: bool,
    pub cutoff_inactive: bool,
}

pub fn read_curve<R: Read>(input: R) -> Result<Vec<CurveRow>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let system = r.headers()?.iter().any(|h| h == "max_v");
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| {
            rec.get(i)
                .ok_or_else(|| IoError::Malformed(format!("missing column {i}")))
        };
        let off = usize::from(system);
        rows.push(CurveRow {
            branch_id: f(0)?
                .parse()
                .map_err(|_| IoError::Malformed("bad branch_id".into()))?,
            lambda: parse_f64(f(1)?)?,
            max_u: parse_f64(f(2)?)?,
            max_v: if system {
                Some(parse_f64(f(3)?)?)
            } else {
                None
            },
            iters: f(3 + off)?
                .parse()
                .map_err(|_| IoError::Malformed("bad iters".into()))?,
            residual: parse_f64(f(4 + off)?)?,
            positive: parse_bool(f(5 + off)?)?,
            max_on_boundary: parse_bool(f(6 + off)?)?,
            apriori_ok: parse_bool(f(7 + off)?)?,
            cutoff_inactive: parse_bool(f(8 + off)?)?,
        });
    }
    Ok(rows)
}

/// Branch-level summary: how each sweep ended.
pub fn write_branches<W: Write>(out: W, branches: &[Branch]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "branch_id",
        "direction",
        "points",
        "termination",
        "lambda_star",
        "lambda_l",
        "lambda_floor",
        "label",
    ])?;
    let nan = || fmt_f64(f64::NAN);
    for (id, b) in branches.iter().enumerate() {
        let (term, star, l, floor) = match b.termination {
            Termination::ReachedEnd => ("reached_end", nan(), nan(), nan()),
            Termination::SolverFailed {
                lambda_star,
                lambda_l,
            } => (
                "solver_failed",
                fmt_f64(lambda_star),
                fmt_f64(lambda_l),
                nan(),
            ),
            Termination::BelowPositivityFloor { lambda } => {
                ("below_positivity_floor", nan(), nan(), fmt_f64(lambda))
            }
        };
        let dir = match b.direction {
            Direction::Left => "left",
            Direction::Right => "right",
        };
        w.write_record([
            id.to_string(),
            dir.to_string(),
            b.points.len().to_string(),
            term.to_string(),
            star,
            l,
            floor,
            b.label.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Node coordinates along the first axis (1D grids).
pub fn node_x(grid: &Grid) -> Vec<f64> {
    (0..grid.num_nodes())
        .map(|k| grid.coordinate(&grid.multi_index(k))[0])
        .collect()
}

/// Columns `x, u` or `x, u, v`; `values` is `u` or `(u; v)`.
pub fn write_profile<W: Write>(out: W, xs: &[f64], values: &[f64]) -> Result<(), IoError> {
    let n = xs.len();
    let system = values.len() == 2 * n;
    if !system && values.len() != n {
        return Err(IoError::Malformed(format!(
            "{} values for {} nodes",
            values.len(),
            n
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    if system {
        w.write_record(["x", "u", "v"])?;
    } else {
        w.write_record(["x", "u"])?;
    }
    for i in 0..n {
        let mut row = vec![fmt_f64(xs[i]), fmt_f64(values[i])];
        if system {
            row.push(fmt_f64(values[n + i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_profile`]: returns `(x, values)` with `values` laid
/// out as `u` or `(u; v)`.
pub fn read_profile<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers()?.len();
    if !(cols == 2 || cols == 3) {
        return Err(IoError::Malformed(format!(
            "expected 2 or 3 columns, got {cols}"
        )));
    }
    let (mut xs, mut u, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        xs.push(parse_f64(&rec[0])?);
        u.push(parse_f64(&rec[1])?);
        if cols == 3 {
            v.push(parse_f64(&rec[2])?);
        }
    }
    u.extend(v);
    Ok((xs, u))
}

/// Columns `x, phi` or `x, phi, psi`.
pub fn write_eigen<W: Write>(
    out: W,
    xs: &[f64],
    phi: &[f64],
    psi: Option<&[f64]>,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if psi.is_some() {
        w.write_record(["x", "phi", "psi"])?;
    } else {
        w.write_record(["x", "phi"])?;
    }
    for (i, &x) in xs.iter().enumerate() {
        let mut row = vec![fmt_f64(x), fmt_f64(phi[i])];
        if let Some(p) = psi {
            row.push(fmt_f64(p[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<File, IoError> {
    Ok(File::create(path)?)
}
