//! `stablear` command-line driver: simulated paths, Monte Carlo error tables,
//! limit-law draws, bootstrap coverage, single-series fits and simulation.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "stablear", version, about = "Unit-root autoregressions with stable innovations")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Main replicate count of the subcommand: Monte Carlo replicates,
    /// outer coverage replicates or limit-law draws.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Default replicate counts.
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// 2000 Monte Carlo replicates, B = 500, 500 outer replicates.
    Desk,
    /// 10000 Monte Carlo replicates, B = 3000, 10000 outer replicates.
    #[value(alias = "paper")]
    Full,
}

impl Scale {
    pub fn monte_carlo(self) -> usize {
        match self {
            Scale::Desk => 2000,
            Scale::Full => 10_000,
        }
    }

    pub fn bootstrap(self) -> usize {
        match self {
            Scale::Desk => 500,
            Scale::Full => 3000,
        }
    }

    pub fn outer(self) -> usize {
        match self {
            Scale::Desk => 500,
            Scale::Full => 10_000,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample paths of the model as (t, X_t) rows, one file per path.
    Paths {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Median and 90% inter-percentile range of |φ̂ − φ| over an (n, α, estimator) grid.
    McTable,
    /// Draws from the limiting law of the normalized estimation error.
    LimitSample {
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Coverage of percentile intervals from the m-out-of-n bootstrap.
    BootCoverage,
    /// Fit one series read from a file.
    Estimate {
        /// Series file with header `index,X,epsilon`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Autoregressive order (defaults to the configured model's order).
        #[arg(long)]
        order: Option<usize>,
    },
    /// Simulate one series of the model.
    Simulate,
}

pub struct RunContext {
    pub file: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub replicates: Option<usize>,
    pub scale: Scale,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = RunContext {
        seed: cli.seed.or(file.seed).unwrap_or(1),
        out_dir: cli.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        replicates: cli.replicates,
        scale: cli.scale,
        file,
    };
    match cli.command {
        Command::Paths { count } => commands::paths(&ctx, count),
        Command::McTable => commands::mc_table(&ctx),
        Command::LimitSample { alpha } => commands::limit_sample(&ctx, alpha),
        Command::BootCoverage => commands::boot_coverage(&ctx),
        Command::Estimate { input, order } => commands::estimate(&ctx, input, order),
        Command::Simulate => commands::simulate(&ctx),
    }
}
