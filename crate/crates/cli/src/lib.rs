// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line surface of nvsim: JSON run configs in, CSV and JSON
//! artifacts out.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nvsim::Engine;

pub use config::RunConfig;
pub use error::{CliError, ExitCode};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "NVSIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nvsim", version, about = "Dressed-state NV electrometry simulator")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random draw; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Signal engine; overrides the config.
    #[arg(long, global = true, value_parser = parse_engine)]
    pub engine: Option<Engine>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dense and/or under-sampled Ramsey traces.
    Ramsey,
    /// Frequency shift against a swept field.
    Scan {
        /// ez, ex, bz or voltage-proxy; overrides the config.
        #[arg(long)]
        axis: Option<config::ScanAxis>,
    },
    /// Ensemble dephasing trace and damped-sinusoid fit.
    Dephasing,
    /// Dielectric screening fit of a kappa,rate_hz,rate_err_hz table.
    FitKappa {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Exact propagation against the closed-form signal.
    ValidateRwa,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: nvsim::Error| e.to_string())
}

/// Caps the global rayon pool from `NVSIM_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let ctx = commands::Context::new(cli.config.as_deref(), cli.out.as_deref(), cli.seed, cli.engine)?;
    match &cli.command {
        Command::Ramsey => commands::ramsey(&ctx),
        Command::Scan { axis } => commands::scan(&ctx, *axis),
        Command::Dephasing => commands::dephasing(&ctx),
        Command::FitKappa { data } => commands::fit_kappa(&ctx, data.as_deref()),
        Command::ValidateRwa => commands::validate_rwa(&ctx),
    }
}
