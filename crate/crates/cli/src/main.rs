use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

mod config;
mod run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Principal eigenvalue and sampled eigenfunction.
    Eigen,
    /// One solve at the configured lambda.
    Solve,
    /// Full bifurcation curve by continuation.
    Trace,
    /// Matrix, truncation-order and certificate diagnostics.
    Check,
}

#[derive(Debug, Parser)]
#[command(
    name = "bifurcate",
    version,
    about = "Bifurcation curves for elliptic problems with nonlinear flux boundary conditions"
)]
struct Args {
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set sweep.delta_lambda=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config::load(&args.config, &args.set).and_then(|c| c.resolve()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match run::run(args.mode, &cfg, &args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
