//! Batch front end: each subcommand reads a TOML run configuration, calls
//! into `volterra_core` and writes one CSV or JSON report.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "volterra", version, about = "Conditional Volterra processes: covariances, small-time limits, rates and exit probes")]
pub struct Cli {
    /// TOML run configuration; all keys are optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// RNG seed, overriding `seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Weight the path-conditioned limit by (1−β, 1−β) instead of (β, 1−β).
    #[arg(long, global = true)]
    pub paper_literal_coefficients: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Covariance of the configured law on a grid → cov.csv
    Cov,
    /// Ladder ratios of the small-time limits → limits.csv
    Limits,
    /// Rate functional of a target path → rate.json
    Rate {
        /// CSV with columns t,h; overrides `rate.h`.
        #[arg(long, value_name = "PATH")]
        h: Option<PathBuf>,
    },
    /// Monte Carlo exit probabilities → probe.csv
    Probe,
    /// Speed exponent of the increment variance → speed.json
    FitSpeed,
}

/// Runs one command and returns the path of the file it wrote.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.paper_literal_coefficients {
        cfg.literal_path_coefficients = true;
    }
    let out = cfg.output_dir.clone();
    let ctx = commands::Context::new(cfg)?;
    match &cli.command {
        Command::Cov => commands::cmd_cov(&ctx, &out),
        Command::Limits => commands::cmd_limits(&ctx, &out),
        Command::Rate { h } => commands::cmd_rate(&ctx, h.as_deref(), &out),
        Command::Probe => commands::cmd_probe(&ctx, &out),
        Command::FitSpeed => commands::cmd_fit_speed(&ctx, &out),
    }
}
