use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use bifurcate_core::assembly::{assemble_a, Problem, SingleProblem, SystemProblem};
use bifurcate_core::continuation::{
    trace_full_curve, Branch, BranchPoint, Direction, InitialGuess, Regime, Termination, Trace,
};
use bifurcate_core::eigen::{
    eigenfunction_system, lambda1_single, lambda1_system_with_amplitude, mu1, Lambda1,
    SingleEigenResult,
};
use bifurcate_core::grid::{max_norm, Grid, GridFunction};
use bifurcate_core::io::{
    fmt_f64, node_x, write_branches, write_curve, write_eigen, write_profile, IoError,
};
use bifurcate_core::linalg::dense_inverse;
use bifurcate_core::nonlinearity::CutoffParams;
use bifurcate_core::solve::{fixed_point_solve, newton_solve, FixedPointStart, SolveOutcome};

use crate::config::{ConfigError, GuessKind, Method, ProblemKind, RunConfig};
use crate::Mode;

/// Inverse-based diagnostics are dense; keep them small.
const CHECK_MAX_NODES: usize = 64;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

fn numerical(e: impl fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, RunError> {
    let grid = cfg.grid()?;
    let cutoff = |lambda: f64| -> Result<Option<CutoffParams>, ConfigError> {
        cfg.cutoff_k()
            .map(|k| {
                CutoffParams::new(
                    cfg.cutoff.rho,
                    k,
                    lambda,
                    grid.h_star_max(),
                    grid.h_star_min(),
                )
                .map_err(|e| ConfigError::new("cutoff", e.to_string()))
            })
            .transpose()
    };
    let c = cutoff(cfg.lambda)?;
    let lambda_err =
        |e: bifurcate_core::assembly::AssemblyError| ConfigError::new("lambda", e.to_string());
    Ok(match cfg.problem {
        ProblemKind::Single => {
            let mut p =
                SingleProblem::new(grid.clone(), cfg.f()?, cfg.lambda).map_err(lambda_err)?;
            if let Some(c) = c {
                p = p
                    .with_cutoff(c)
                    .map_err(|e| ConfigError::new("cutoff", e.to_string()))?;
            }
            p.into()
        }
        ProblemKind::System => {
            let mut p = SystemProblem::new(grid.clone(), cfg.f()?, cfg.g()?, cfg.lambda)
                .map_err(lambda_err)?;
            if let Some(c) = c {
                p = p
                    .with_cutoffs(c, c)
                    .map_err(|e| ConfigError::new("cutoff", e.to_string()))?;
            }
            p.into()
        }
    })
}

fn write_resolved(mode: Mode, cfg: &RunConfig, out: &Path) -> Result<(), RunError> {
    let mut v = serde_json::to_value(cfg).map_err(|e| RunError::Io(e.to_string()))?;
    let name = format!("{mode:?}").to_lowercase();
    v.as_object_mut()
        .expect("config serializes to an object")
        .insert("mode".into(), name.into());
    let text = serde_json::to_string_pretty(&v).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(out.join("resolved_config.json"), text + "\n")?;
    Ok(())
}

pub fn run(mode: Mode, cfg: &RunConfig, out: &Path) -> Result<(), RunError> {
    if mode == Mode::Trace && cfg.sweep.regime.is_none() {
        return Err(ConfigError::new("sweep.regime", "required for trace").into());
    }
    if mode == Mode::Check && cfg.m > CHECK_MAX_NODES {
        return Err(ConfigError::new(
            "M",
            format!("check mode needs M <= {CHECK_MAX_NODES}, got {}", cfg.m),
        )
        .into());
    }
    let problem = build_problem(cfg)?;
    fs::create_dir_all(out)?;
    write_resolved(mode, cfg, out)?;
    match mode {
        Mode::Eigen => run_eigen(cfg, &problem, out),
        Mode::Solve => run_solve(cfg, &problem, out),
        Mode::Trace => run_trace(cfg, &problem, out),
        Mode::Check => run_check(cfg, &problem, out),
    }
}

fn run_eigen(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<(), RunError> {
    let xs = node_x(problem.grid());
    let amp = cfg.sweep.amplitude;
    let mut stdout = io::stdout().lock();
    match cfg.problem {
        ProblemKind::Single => {
            let fp = cfg.f()?.derivative_at_zero();
            let l1 = lambda1_single(fp).map_err(|e| ConfigError::new("f_coeffs", e.to_string()))?;
            writeln!(stdout, "lambda1 = {l1}")?;
            writeln!(stdout, "mu1 = {}", fmt_f64(mu1()))?;
            if l1.is_infinite() {
                writeln!(stdout, "no eigenfunction: lambda1 is infinite")?;
                return Ok(());
            }
            let r = SingleEigenResult::new(fp, amp).map_err(numerical)?;
            writeln!(stdout, "A = {}", fmt_f64(r.a))?;
            writeln!(stdout, "B = {}", fmt_f64(r.b))?;
            let phi: Vec<f64> = xs.iter().map(|&x| r.eval(x)).collect();
            write_eigen(fs::File::create(out.join("eigen.csv"))?, &xs, &phi, None)?;
        }
        ProblemKind::System => {
            let (fp, gp) = (cfg.f()?.derivative_at_zero(), cfg.g()?.derivative_at_zero());
            let r = lambda1_system_with_amplitude(fp, gp, amp)
                .map_err(|e| ConfigError::new("f_coeffs", e.to_string()))?;
            writeln!(stdout, "lambda1 = {}", r.lambda1)?;
            writeln!(stdout, "mu1 = {}", fmt_f64(mu1()))?;
            writeln!(stdout, "sigma = {}", fmt_f64(r.sigma))?;
            if r.lambda1 == Lambda1::Infinite {
                writeln!(stdout, "no eigenfunction: lambda1 is infinite")?;
                return Ok(());
            }
            writeln!(stdout, "A = {}", fmt_f64(r.a))?;
            writeln!(stdout, "C = {}", fmt_f64(r.c))?;
            let (phi, psi): (Vec<f64>, Vec<f64>) = xs
                .iter()
                .map(|&x| eigenfunction_system(x, &r, amp))
                .collect::<Result<Vec<_>, _>>()
                .map_err(numerical)?
                .into_iter()
                .unzip();
            write_eigen(
                fs::File::create(out.join("eigen.csv"))?,
                &xs,
                &phi,
                Some(&psi),
            )?;
        }
    }
    Ok(())
}

fn point_from(problem: &Problem, o: &SolveOutcome) -> BranchPoint {
    let n = problem.grid().num_nodes();
    BranchPoint {
        lambda: problem.lambda(),
        max_u: max_norm(&o.solution[..n]),
        max_v: problem.is_system().then(|| max_norm(&o.solution[n..])),
        profile: Some(o.solution.clone()),
        iters: o.iters,
        residual: o.final_residual_norm,
        certificates: o.certificates,
    }
}

fn run_solve(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<(), RunError> {
    let ncfg = cfg.newton_config();
    let s = &cfg.solve;
    let outcome = match s.method {
        Method::Newton => {
            let guess = match s.guess {
                GuessKind::Eigenfunction => InitialGuess::EigenfunctionProfile(s.amplitude),
                GuessKind::Constant => InitialGuess::ConstantProfile(s.amplitude),
                _ => {
                    return Err(ConfigError::new(
                        "solve.guess",
                        "newton takes eigenfunction or constant",
                    )
                    .into())
                }
            };
            let x0 = guess.realize(problem).map_err(numerical)?;
            newton_solve(problem, &x0, &ncfg).map_err(numerical)?
        }
        Method::FixedPoint => {
            let start = match s.guess {
                GuessKind::Supersolution => FixedPointStart::Supersolution,
                GuessKind::Subsolution => FixedPointStart::Subsolution,
                _ => {
                    return Err(ConfigError::new(
                        "solve.guess",
                        "fixed_point takes supersolution or subsolution",
                    )
                    .into())
                }
            };
            fixed_point_solve(problem, start, &ncfg)
                .map_err(numerical)?
                .outcome
        }
    };
    let point = point_from(problem, &outcome);
    write_profile(
        fs::File::create(out.join("solution.csv"))?,
        &node_x(problem.grid()),
        &outcome.solution,
    )?;
    let branch = Branch {
        label: "solve".into(),
        direction: Direction::Right,
        points: vec![point.clone()],
        termination: Termination::ReachedEnd,
    };
    write_curve(
        fs::File::create(out.join("curve.csv"))?,
        &[branch],
        problem.is_system(),
    )?;
    let c = outcome.certificates;
    println!(
        "status = {:?}, iters = {}, residual = {}, max_u = {}{}",
        outcome.status,
        outcome.iters,
        fmt_f64(outcome.final_residual_norm),
        fmt_f64(point.max_u),
        point
            .max_v
            .map(|v| format!(", max_v = {}", fmt_f64(v)))
            .unwrap_or_default()
    );
    println!(
        "positive = {}, max_on_boundary = {}, apriori_ok = {}, cutoff_inactive = {}",
        c.positive, c.max_on_boundary, c.apriori_ok, c.cutoff_inactive
    );
    if outcome.converged() {
        Ok(())
    } else {
        Err(RunError::Numerical(format!(
            "solve ended with status {:?}",
            outcome.status
        )))
    }
}

fn write_trace(
    problem: &Problem,
    trace: &Trace,
    profiles: bool,
    out: &Path,
) -> Result<(), RunError> {
    write_curve(
        fs::File::create(out.join("curve.csv"))?,
        &trace.branches,
        problem.is_system(),
    )?;
    write_branches(fs::File::create(out.join("branches.csv"))?, &trace.branches)?;
    if !profiles {
        return Ok(());
    }
    let dir = out.join("profiles");
    fs::create_dir_all(&dir)?;
    let xs = node_x(problem.grid());
    let mut index = String::from("branch_id,point,lambda,file\n");
    for (b, branch) in trace.branches.iter().enumerate() {
        for (k, p) in branch.points.iter().enumerate() {
            let Some(w) = &p.profile else { continue };
            let name = format!("b{b}_{k:05}.csv");
            write_profile(fs::File::create(dir.join(&name))?, &xs, w)?;
            index.push_str(&format!("{b},{k},{},{name}\n", fmt_f64(p.lambda)));
        }
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

fn run_trace(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<(), RunError> {
    let regime: Regime = cfg.sweep.regime.expect("checked by run").into();
    let opts = cfg.trace_options()?;
    let trace = match trace_full_curve(problem, regime, &opts, &cfg.newton_config()) {
        Ok(t) => t,
        Err(e) => {
            // Leave well-formed, empty outputs next to the reason.
            let empty = Trace {
                lambda1: Lambda1::Infinite,
                delta_used: None,
                branches: Vec::new(),
            };
            write_trace(problem, &empty, false, out)?;
            fs::write(out.join("failure.txt"), format!("{e}\n"))?;
            return Err(numerical(e));
        }
    };
    write_trace(problem, &trace, cfg.output.profiles, out)?;

    println!("lambda1 = {}", trace.lambda1);
    if let Some(d) = trace.delta_used {
        println!("delta = {}", fmt_f64(d));
    }
    let mut failed = None;
    for (i, b) in trace.branches.iter().enumerate() {
        println!(
            "branch {i} ({}): {} points, {:?}",
            b.label,
            b.points.len(),
            b.termination
        );
        // The first Right sweep of the fold protocol is meant to stop at
        // the turning point.
        let expected = regime == Regime::SupercriticalWithFold && i == 1;
        if matches!(b.termination, Termination::SolverFailed { .. }) && !expected {
            failed.get_or_insert(i);
        }
    }
    match failed {
        None => Ok(()),
        Some(i) => Err(RunError::Numerical(format!(
            "branch {i} ended with {:?}",
            trace.branches[i].termination
        ))),
    }
}

struct Diagnostic {
    name: &'static str,
    value: f64,
    pass: bool,
}

fn order_errors(a: f64, b: f64, m: usize) -> Result<(f64, f64), RunError> {
    let grid = Grid::interval(a, b, m).map_err(numerical)?;
    let u = GridFunction::from_fn(&grid, |x| x[0].cosh());
    let xs = grid.axis_coordinates(0);
    let mut interior = 0.0f64;
    for i in 1..m - 1 {
        interior = interior.max((u.second_diff(0, &[i]).map_err(numerical)? - xs[i].cosh()).abs());
    }
    let right = (u.normal_derivative(&[m - 1]).map_err(numerical)? - b.sinh()).abs();
    let left = (u.normal_derivative(&[0]).map_err(numerical)? + a.sinh()).abs();
    Ok((interior, right.max(left)))
}

fn run_check(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<(), RunError> {
    let grid = problem.grid();
    let mut a = assemble_a(grid);
    if cfg.check.corrupt_stencil {
        *a.entry_mut(1, 0) = -a.get(1, 0);
    }
    let dense = a.to_dense();
    let mut worst_sign = f64::NEG_INFINITY;
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let s = if i == j { -v } else { v };
            worst_sign = worst_sign.max(s);
        }
    }
    let min_inv = dense_inverse(&dense)
        .map(|inv| inv.iter().flatten().fold(f64::INFINITY, |m, &x| m.min(x)))
        .unwrap_or(f64::NEG_INFINITY);

    let [lo, hi] = cfg.domain;
    let m = cfg.m;
    let e1 = order_errors(lo, hi, m)?;
    let e2 = order_errors(lo, hi, 2 * m - 1)?;
    let e3 = order_errors(lo, hi, 4 * m - 3)?;
    let r2 = [e1.0 / e2.0, e2.0 / e3.0];
    let r1 = [e1.1 / e2.1, e2.1 / e3.1];
    let in_band = |r: &[f64; 2], lo: f64, hi: f64| r.iter().all(|x| (lo..=hi).contains(x));

    let ncfg = cfg.newton_config();
    let guess = InitialGuess::EigenfunctionProfile(cfg.solve.amplitude)
        .realize(problem)
        .map_err(numerical)?;
    let reference = newton_solve(problem, &guess, &ncfg).map_err(numerical)?;
    let c = reference.certificates;

    let checks = [
        Diagnostic {
            name: "z_matrix_max_sign_violation",
            value: worst_sign,
            pass: worst_sign <= 0.0,
        },
        Diagnostic {
            name: "inverse_min_entry",
            value: min_inv,
            pass: min_inv >= -1e-12,
        },
        Diagnostic {
            name: "second_difference_ratio_1",
            value: r2[0],
            pass: in_band(&r2, 3.6, 4.4),
        },
        Diagnostic {
            name: "second_difference_ratio_2",
            value: r2[1],
            pass: in_band(&r2, 3.6, 4.4),
        },
        Diagnostic {
            name: "normal_derivative_ratio_1",
            value: r1[0],
            pass: in_band(&r1, 1.8, 2.2),
        },
        Diagnostic {
            name: "normal_derivative_ratio_2",
            value: r1[1],
            pass: in_band(&r1, 1.8, 2.2),
        },
        Diagnostic {
            name: "reference_solve_residual",
            value: reference.final_residual_norm,
            pass: reference.converged(),
        },
        Diagnostic {
            name: "certificate_positive",
            value: f64::from(u8::from(c.positive)),
            pass: c.positive,
        },
        Diagnostic {
            name: "certificate_max_on_boundary",
            value: f64::from(u8::from(c.max_on_boundary)),
            pass: c.max_on_boundary,
        },
        Diagnostic {
            name: "certificate_apriori",
            value: f64::from(u8::from(c.apriori_ok)),
            pass: c.apriori_ok,
        },
        Diagnostic {
            name: "certificate_cutoff_inactive",
            value: f64::from(u8::from(c.cutoff_inactive)),
            pass: c.cutoff_inactive,
        },
    ];

    let mut report = String::from("check,value,pass\n");
    for d in &checks {
        report.push_str(&format!("{},{},{}\n", d.name, fmt_f64(d.value), d.pass));
        println!(
            "{:<30} {:>24} {}",
            d.name,
            fmt_f64(d.value),
            if d.pass { "PASS" } else { "FAIL" }
        );
    }
    fs::write(out.join("check.csv"), report)?;
    let failed: Vec<&str> = checks.iter().filter(|d| !d.pass).map(|d| d.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::Numerical(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}
