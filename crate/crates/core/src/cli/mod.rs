//! Command-line front end: `check`, `simulate`, `decompose` and `sweep`.
//!
//! Exit status is 0 on success, 1 when a certificate or the solver refuses
//! (or an output cannot be written), and 2 for usage errors.

pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the log filter (`info`, `debug`, ...).
pub const LOG_ENV: &str = "VOLTERRA_PAA_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Refused(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidModel(_) | crate::Error::Dimension { .. } => CliError::Usage(e.to_string()),
            other => CliError::Refused(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "volterra-paa", version, about = "Certify and solve damped Volterra integro-differential equations mode by mode")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the hypothesis certificates and write certificates.json.
    Check(CommonArgs),
    /// Certify, solve, and write trajectory.csv, report.json and certificates.json.
    Simulate(CommonArgs),
    /// Ergodic-mean and shift diagnostics of a trajectory CSV.
    Decompose(DecomposeArgs),
    /// Simulate every point of the cartesian product in the `sweep` section.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of coefficient slots written to the trajectory CSV.
    #[arg(long)]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trajectory CSV to analyse.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Almost automorphic reference on the same grid.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
