#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod model;

use commands::{PolicyArg, SweepParam};

/// Solver and simulator for storage processes with intermittent output.
#[derive(Debug, Parser)]
#[command(name = "levyrate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal water-filling rate and its summary.
    Solve {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Curves of G over a multiplier grid for several values of one cost.
    Sweep {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// `start:end:count`
        #[arg(long)]
        lambda_grid: String,
    },
    /// Monte Carlo estimates for a policy, with analytic comparisons.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `constant:R`, `affine:s` or `optimal`
        #[arg(long, default_value = "optimal", value_parser = commands::parse_policy)]
        policy: PolicyArg,
    },
    /// Optimal rule when only the customer count is observed.
    Partial {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Infeasible(String),
    Unstable(String),
    Io(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Unstable(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Schema(m)
            | CliError::Infeasible(m)
            | CliError::Unstable(m)
            | CliError::Io(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<levyrate::Error> for CliError {
    fn from(e: levyrate::Error) -> Self {
        use levyrate::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidModel(_) | E::BackendMismatch { .. } => CliError::Schema(msg),
            E::UnstablePolicy(_) => CliError::Unstable(msg),
            E::InfeasibleBudget { .. } => CliError::Infeasible(msg),
            _ => CliError::Other(msg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { model, out } => commands::solve(&model::load(&model)?, &out),
        Command::Sweep { model, out, param, values, lambda_grid } => {
            let grid = commands::parse_grid(&lambda_grid)?;
            commands::sweep(&model::load(&model)?, &out, param, &values, &grid)
        }
        Command::Simulate { model, out, policy } => commands::simulate(&model::load(&model)?, &out, policy),
        Command::Partial { model, out } => commands::partial(&model::load(&model)?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
