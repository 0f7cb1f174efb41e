//! Command-line front end for rig simulation and parameter estimation.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub use commands::{Outcome, Overrides};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "rig-ident",
    version,
    about = "Simulate the drillstring test rig and estimate its parameters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the rig model and write the state trajectory.
    Simulate(RunArgs),
    /// Write a synthetic measurement file with seeded Gaussian noise.
    Generate(RunArgs),
    /// Two-parameter (cm, ke) recovery sweep over noise levels.
    Verify2(RunArgs),
    /// Nine-parameter pairwise heuristic with deviation report and misfit trace.
    Estimate9(RunArgs),
    /// Print the default configuration document.
    Defaults,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Configuration file with dotted keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory. Falls back to $RIG_IDENT_OUT, then the working directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Noise seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Noise standard deviation; also replaces the verify2 noise levels.
    #[arg(long, value_name = "FLOAT")]
    pub sigma: Option<f64>,
    /// Measurement file for estimate9.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Ground-truth parameter file for synthetic estimate9 runs.
    #[arg(long, value_name = "PATH")]
    pub synthetic_truth: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            sigma: self.sigma,
            data: self.data.clone(),
            synthetic_truth: self.synthetic_truth.clone(),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        commands::resolve_config(self.config.as_deref(), &self.overrides())
    }
}

/// Runs a parsed command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let (args, cmd): (&RunArgs, fn(&RunConfig) -> Result<Outcome>) = match &cli.command {
        Command::Defaults => return Ok(RunConfig::defaults_document()),
        Command::Simulate(a) => (a, commands::cmd_simulate),
        Command::Generate(a) => (a, commands::cmd_generate),
        Command::Verify2(a) => (a, commands::cmd_verify2),
        Command::Estimate9(a) => (a, commands::cmd_estimate9),
    };
    let cfg = args.resolve()?;
    let outcome = cmd(&cfg)?;
    let mut text = outcome.summary;
    for f in &outcome.files {
        text.push_str(&format!("\nwrote {}", f.display()));
    }
    Ok(text)
}
