//! `tangentlab` command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 when a numerical check fails,
//! 2 for usage and configuration errors.

mod commands;
mod config;
mod verify;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid config, unwritable output.
    Usage(String),
    /// A run could not be completed.
    Failed(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<tangentlab::Error> for CliError {
    fn from(e: tangentlab::Error) -> Self {
        match e {
            tangentlab::Error::InvalidParams(_) | tangentlab::Error::InvalidInput(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tangentlab", version, about = "Reduced equivariant p-energy model: runs, sweeps and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,

    /// Override a scalar config field, e.g. `--set params.kappa=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report the admissibility clauses for the configured parameters.
    CheckParams(Common),
    /// Integrate one trajectory and write CSV, events and a summary.
    Simulate(Common),
    /// Run a grid of seed simulations in parallel.
    Sweep(Common),
    /// Run verification suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// hamiltonian, monotonicity, strip, hardy, bvp, minimality or all.
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Tangent-angle estimates along a run.
    Tangent(Common),
    /// Density ratio profile as CSV.
    EnergyProfile(Common),
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::CheckParams(c) => commands::check_params(&config::load(&c.config, &c.overrides)?),
        Command::Simulate(c) => commands::simulate(&config::load(&c.config, &c.overrides)?),
        Command::Sweep(c) => commands::sweep(&config::load(&c.config, &c.overrides)?),
        Command::Verify { common, suite } => {
            let suites = verify::parse_suite(&suite)?;
            verify::run(&config::load(&common.config, &common.overrides)?, &suites)
        }
        Command::Tangent(c) => commands::tangent(&config::load(&c.config, &c.overrides)?),
        Command::EnergyProfile(c) => commands::energy_profile(&config::load(&c.config, &c.overrides)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
