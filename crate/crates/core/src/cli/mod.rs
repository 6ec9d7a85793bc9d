//! Batch front end.
//!
//! Every subcommand reads a TOML run description, writes CSV tables and a
//! `summary.json` into the output directory, and reports pass or fail.
//! Replicas are independent ChaCha streams of the master seed, so output is
//! identical for any `--jobs`.

mod config;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    as_config, AMode, ChannelDef, ChannelTable, CoreConfig, CoupleConfig, DiagnoseConfig, Monomial, RunConfig,
    LIPSCHITZ_SAMPLES,
};
pub use run::{run, Outcome};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "ctmc-fluid", version, about = "Fluid limits of Markov chains with explicit error probabilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate replicas and write their coordinate paths.
    Simulate(RunArgs),
    /// Integrate the fluid limit and locate its exit from the domain.
    Fluid(RunArgs),
    /// Evaluate the L2 and exponential error budgets.
    Bound(RunArgs),
    /// Compare simulated replicas with the fluid path against the budget.
    Compare(RunArgs),
    /// Run the coupled chain with tracked labels and measure decoupling.
    Couple(RunArgs),
    /// Peel random hypergraphs to their k-core and compare with the limit.
    Core(RunArgs),
    /// Monte Carlo checks of the martingale inequalities.
    Diagnose(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run description.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Overrides the seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fluid(_) => "fluid",
            Command::Bound(_) => "bound",
            Command::Compare(_) => "compare",
            Command::Couple(_) => "couple",
            Command::Core(_) => "core",
            Command::Diagnose(_) => "diagnose",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Fluid(a)
            | Command::Bound(a)
            | Command::Compare(a)
            | Command::Couple(a)
            | Command::Core(a)
            | Command::Diagnose(a) => a,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidModel(_) | Error::Dimension { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}
