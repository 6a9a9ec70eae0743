use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bifurcate_core::assembly::{NonlinearSystem, Problem, SingleProblem, SystemProblem};
use bifurcate_core::grid::{max_norm, Grid};
use bifurcate_core::io::{read_curve, read_profile};
use bifurcate_core::nonlinearity::Polynomial;
use tempfile::TempDir;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

fn bifurcate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifurcate"))
        .args(args)
        .output()
        .unwrap()
}

fn run(mode: &str, config: &Path, out: &Path, sets: &[&str]) -> Output {
    let mut args = vec![
        mode,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    for s in sets {
        args.extend(["--set", s]);
    }
    bifurcate(&args)
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn stdout_value(o: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&o.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn eigen_reports_principal_eigenvalues() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let o = run("eigen", &preset("fig2.json"), &out, &[]);
    assert!(o.status.success());
    let l: f64 = stdout_value(&o, "lambda1").parse().unwrap();
    assert!((l - 0.23105858).abs() < 5e-9);
    let eigen = fs::read_to_string(out.join("eigen.csv")).unwrap();
    assert!(eigen.starts_with("x,phi\n"));
    assert_eq!(eigen.lines().count(), 176);

    let o = run("eigen", &preset("fig4.json"), &out, &[]);
    assert!(o.status.success());
    assert_eq!(stdout_value(&o, "lambda1"), "infinite");

    let o = run("eigen", &preset("fig6.json"), &out, &[]);
    let l: f64 = stdout_value(&o, "lambda1").parse().unwrap();
    assert!((l - 0.46211716).abs() < 5e-9);
    assert!(fs::read_to_string(out.join("eigen.csv"))
        .unwrap()
        .starts_with("x,phi,psi\n"));
}

#[test]
fn eigen_rejects_a_negative_slope() {
    let dir = TempDir::new().unwrap();
    let o = run(
        "eigen",
        &preset("fig2.json"),
        &dir.path().join("o"),
        &["f_coeffs=[0, -1, 1]"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("f_coeffs"));
}

#[test]
fn trace_fig1_decreases_in_lambda() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run(
        "trace",
        &preset("fig1.json"),
        &out,
        &["output.profiles=false"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_curve(fs::File::open(out.join("curve.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2991);
    assert!(rows
        .windows(2)
        .all(|w| w[0].lambda > w[1].lambda && w[0].max_u < w[1].max_u));
    assert!(!out.join("profiles").exists());
}

#[test]
fn trace_fig3_records_the_fold() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run(
        "trace",
        &preset("fig3.json"),
        &out,
        &["output.profiles=false"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let branches = fs::read_to_string(out.join("branches.csv")).unwrap();
    let lines: Vec<&str> = branches.lines().collect();
    assert_eq!(lines.len(), 4);
    let fold: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fold[3], "solver_failed");
    let star: f64 = fold[4].parse().unwrap();
    let l: f64 = fold[5].parse().unwrap();
    assert!(l < star && (4.62..=4.85).contains(&l));
    let rows = read_curve(fs::File::open(out.join("curve.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.branch_id).max(), Some(2));
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"problem": "single", "M": 11}"#);
    let o = run("trace", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("f_coeffs"));

    let o = run(
        "trace",
        &preset("fig1.json"),
        &dir.path().join("o"),
        &["sweep.delta_lambda=-1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.delta_lambda"));

    let o = run(
        "trace",
        &preset("fig1.json"),
        &dir.path().join("o"),
        &["sweep.regime=sideways"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.regime"));

    let o = bifurcate(&["dance", "--config", "x", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_passes_and_catches_a_corrupt_stencil() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("check", &preset("fig1.json"), &out, &["M=10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("check.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.ends_with(",true")));

    let o = run(
        "check",
        &preset("fig1.json"),
        &out,
        &["M=10", "check.corrupt_stencil=true"],
    );
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(out.join("check.csv")).unwrap();
    assert!(report.contains("z_matrix_max_sign_violation") && report.contains(",false"));

    let o = run("check", &preset("fig1.json"), &out, &["M=151"]);
    assert_eq!(o.status.code(), Some(2));
}

fn problem_from(system: bool, m: usize, f: &[f64], g: &[f64], lambda: f64) -> Problem {
    let grid = Grid::interval(0.0, 1.0, m).unwrap();
    let f = Polynomial::new(f.to_vec()).unwrap();
    if system {
        let g = Polynomial::new(g.to_vec()).unwrap();
        SystemProblem::new(grid, f, g, lambda).unwrap().into()
    } else {
        SingleProblem::new(grid, f, lambda).unwrap().into()
    }
}

#[test]
fn profiles_reproduce_recorded_residuals() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let sets = ["sweep.lambda_min=2.5", "sweep.delta_lambda=0.05", "M=41"];
    let o = run("trace", &preset("fig5.json"), &out, &sets);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_curve(fs::File::open(out.join("curve.csv")).unwrap()).unwrap();
    let index = fs::read_to_string(out.join("profiles/index.csv")).unwrap();
    let entries: Vec<&str> = index.lines().skip(1).collect();
    assert_eq!(entries.len(), rows.len());
    let base = problem_from(true, 41, &[0.0, 1.0, 1.0], &[0.0, 0.0, 1.0], 1.0);
    for (line, row) in entries.iter().zip(&rows) {
        let file = line.rsplit(',').next().unwrap();
        let (_, w) =
            read_profile(fs::File::open(out.join("profiles").join(file)).unwrap()).unwrap();
        let p = base.with_lambda(row.lambda).unwrap();
        let r = max_norm(&p.residual(&w).unwrap());
        assert!(
            (r - row.residual).abs() <= 1e-12 * row.residual,
            "{r} vs {}",
            row.residual
        );
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let sets = [
        "cutoff.enabled=true",
        "sweep.lambda_min=0.5",
        "sweep.delta_lambda=0.01",
    ];
    assert!(run("trace", &preset("fig1.json"), &a, &sets)
        .status
        .success());
    let resolved = fs::read_to_string(a.join("resolved_config.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&resolved).unwrap();
    assert!(v["cutoff"]["K"].is_f64());
    assert_eq!(v["mode"], "trace");
    assert!(run("trace", &a.join("resolved_config.json"), &b, &[])
        .status
        .success());
    for f in [
        "curve.csv",
        "branches.csv",
        "resolved_config.json",
        "profiles/b0_00000.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn failed_solve_exits_one_with_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    // f = 1 + s² has no solution for large lambda.
    let o = run(
        "solve",
        &preset("fig1.json"),
        &out,
        &["f_coeffs=[1, 0, 1]", "lambda=10", "solve.guess=constant"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("solution.csv").exists());
    assert!(out.join("curve.csv").exists());

    let o = run("solve", &preset("fig1.json"), &out, &["M=41"]);
    assert!(o.status.success());
    let rows = read_curve(fs::File::open(out.join("curve.csv")).unwrap()).unwrap();
    assert!(rows[0].positive && rows[0].max_on_boundary && rows[0].apriori_ok);
}

#[test]
fn fixed_point_solve_runs_from_the_supersolution() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let sets = [
        "M=21",
        "cutoff.enabled=true",
        "solve.method=fixed_point",
        "solve.guess=supersolution",
        "newton.max_iters=5000",
    ];
    let o = run("solve", &preset("fig1.json"), &out, &sets);
    assert!(out.join("solution.csv").exists());
    assert!(o.status.success());
    let bad = run(
        "solve",
        &preset("fig1.json"),
        &out,
        &["solve.method=fixed_point"],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("solve.method"));
}
