//! `csbp`: inspect mechanisms, tabulate u_t(θ), simulate, verify and sweep.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical failure.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunConfig};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<csbp::Error> for CliError {
    fn from(e: csbp::Error) -> Self {
        CliError { code: if e.is_numerical() { 3 } else { 2 }, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "csbp", version, about = "Continuous-state branching processes: skeletons, spines and their verification")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run seed; overrides the config file
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Parent directory of the run directories
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write per-path CSVs
    #[arg(long, global = true)]
    paths: bool,
    /// Print nothing on success
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classification, λ*, Grey's condition and a ψ/ψ′ table
    Mech,
    /// u_t(θ) and ∂u/∂θ on a time grid
    Table,
    /// Monte Carlo paths of one experiment kind
    Simulate,
    /// Run a verification suite
    Verify {
        /// identities, exact, euler, theorem21, theorem22, theorem23, extinction, selftest or all
        suite: String,
    },
    /// Skeleton-to-spine experiment over a list of horizons
    Sweep,
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.emit_paths |= cli.paths;
    let outcome = match &cli.cmd {
        Cmd::Mech => commands::mech(cfg.resolve(Command::Mech)?)?,
        Cmd::Table => commands::table(cfg.resolve(Command::Table)?)?,
        Cmd::Simulate => commands::simulate(cfg.resolve(Command::Simulate)?)?,
        Cmd::Verify { suite } => commands::verify(cfg.resolve(Command::Verify)?, suite)?,
        Cmd::Sweep => commands::sweep(cfg.resolve(Command::Sweep)?)?,
    };
    let dir = outcome.run.finish()?;
    if !cli.quiet {
        print!("{}", outcome.text);
        println!("run directory: {}", dir.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
