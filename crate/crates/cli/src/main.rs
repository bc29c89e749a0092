//! `kcsolve`: solve, verify, sweep and cross-check nonlocal Kirchhoff-Carrier
//! problems from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 max-iter, 3 left-interval,
//! 4 structural checks failed, 5 oracle inconclusive, 6 oracle disagrees,
//! 10 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunArgs, RunConfig};

pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const MAX_ITER: u8 = 2;
    pub const LEFT_INTERVAL: u8 = 3;
    pub const CONDITIONS_FAILED: u8 = 4;
    pub const ORACLE_INCONCLUSIVE: u8 = 5;
    pub const ORACLE_DISAGREE: u8 = 6;
    pub const IO: u8 = 10;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] kirchhoff_core::error::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(kirchhoff_core::error::Error::ConditionsFailed(_)) => exit::CONDITIONS_FAILED,
            CliError::Core(_) => exit::CONFIG,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kcsolve", version, about = "Nonlocal Kirchhoff-Carrier solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build, check and solve one problem
    Solve(RunArgs),
    /// Run the structural, invariance and positivity checks
    Verify(RunArgs),
    /// Solve across a ladder of lambda or mu values
    Sweep(SweepArgs),
    /// Compare the fixed-point solution with a dense Newton solve
    OracleCompare(RunArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 16)]
    points: usize,
    /// Worker threads (defaults to the number of CPUs)
    #[arg(long, env = "KCSOLVE_JOBS")]
    jobs: Option<usize>,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve(args) => commands::solve(&RunConfig::from_args(&args)?),
        Command::Verify(args) => commands::verify(&RunConfig::from_args(&args)?),
        Command::Sweep(args) => {
            let jobs = args
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::sweep(&RunConfig::from_args(&args.run)?, args.points, jobs)
        }
        Command::OracleCompare(args) => commands::oracle_compare(&RunConfig::from_args(&args)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("kcsolve: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
