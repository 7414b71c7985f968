//! Command-line harness around the `maxstorm` library: simulate fields,
//! tabulate dependence measures, fit parameters and run Monte Carlo studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod field_io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

/// Caps rayon's worker count.
pub const THREADS_ENV: &str = "MAXSTORM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "maxstorm", version, about = "Space-time max-stable simulation and fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a field; writes field.csv, metadata.json and timing.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate analytic and empirical extremal coefficients per lag.
    Dependence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the Smith-innovation model to a planar field.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        field: PathBuf,
        /// 1: spatial parameters first, then temporal; 2: all jointly.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scheme: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and fit many replicates; writes summary.csv and estimates.csv.
    McStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Sizes rayon's global pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Dependence { config, field, out } => commands::dependence(&config, field.as_deref(), &out),
        Command::Fit {
            config,
            field,
            scheme,
            out,
        } => commands::fit(&config, &field, scheme, &out),
        Command::McStudy { config, replicates, out } => commands::mc_study(&config, replicates, &out),
    }
}
