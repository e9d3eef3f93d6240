use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dualvar::cli::{self, Command};
use dualvar::config::RunConfig;
use dualvar::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    /// Properties of the transform and convexity of |f|^s.
    VerifyTransform,
    /// Subspace certificates for n = 1..n_max and coercivity rays.
    CheckGeometry,
    /// Nonnegative negative-energy solution with residual checks.
    GroundState,
    /// Multi-start search for further negative-energy solutions.
    MultiSolutions,
    /// Everything above.
    CheckAll,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::VerifyTransform => Command::VerifyTransform,
            Sub::CheckGeometry => Command::CheckGeometry,
            Sub::GroundState => Command::GroundState,
            Sub::MultiSolutions => Command::MultiSolutions,
            Sub::CheckAll => Command::CheckAll,
        }
    }
}

/// Radial solver and property checks for a quasilinear Schrödinger equation.
///
/// Exit status: 0 when every check passes, 1 when a check fails (see
/// report.json), 2 on a configuration error.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// Configuration file (`key = value` lines). Defaults apply without one.
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path),
        None => {
            let mut cfg = RunConfig::default();
            if let Some(dir) = std::env::var_os(dualvar::config::OUTPUT_ENV) {
                cfg.output_dir = dir.into();
            }
            Ok(cfg)
        }
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli::run(args.command.into(), &cfg) {
        Ok(report) if report.passed => {
            println!("all checks passed; report in {}", cfg.output_dir.join("report.json").display());
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for f in &report.failures {
                eprintln!("failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e @ (Error::Config { .. } | Error::InvalidParameter(_) | Error::InvalidExponent { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
