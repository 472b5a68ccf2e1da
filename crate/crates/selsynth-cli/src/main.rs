//! Command-line surface: dataset ingestion, pipeline orchestration, and
//! artifact persistence.

mod config;
mod dataset;
mod manifest;
mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use stages::RunPaths;

#[derive(Parser)]
#[command(name = "selsynth", version, about = "Selectivity-preserving tabular data synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the selectivity loss weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cap the worker-thread pool (0 keeps the default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the reversible per-column transform on the dataset.
    FitSchema(Common),
    /// Build the labeled training workload and train the selectivity
    /// estimator.
    TrainSel(Common),
    /// Train the generator and critic against the frozen estimator.
    TrainGan {
        #[command(flatten)]
        common: Common,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sample a synthetic table from the trained generator.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of rows (defaults to the dataset size).
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Compute the evaluation report for the generated table.
    Evaluate(Common),
    /// Paired with/without-selectivity comparison over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seed list override.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run every stage in order with checkpoint-based resumption.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Rerun all stages even when artifacts are current.
        #[arg(long)]
        force: bool,
    },
}

fn load_config(common: &Common) -> Result<(PipelineConfig, RunPaths)> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(alpha) = common.alpha {
        anyhow::ensure!(alpha >= 0.0, "--alpha must be nonnegative");
        config.gan.alpha = alpha;
    }
    if let Some(out_dir) = &common.out_dir {
        config.out_dir = out_dir.clone();
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    selsynth::configure_threads(config.threads)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let paths = RunPaths::new(&config.out_dir);
    Ok((config, paths))
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::FitSchema(common) => {
            let (config, paths) = load_config(&common)?;
            stages::fit_schema(&config, &paths)
        }
        Command::TrainSel(common) => {
            let (config, paths) = load_config(&common)?;
            stages::train_sel(&config, &paths)
        }
        Command::TrainGan { common, epochs } => {
            let (mut config, paths) = load_config(&common)?;
            if let Some(e) = epochs {
                anyhow::ensure!(e > 0, "--epochs must be positive");
                config.gan.epochs = e;
            }
            stages::train_gan(&config, &paths)
        }
        Command::Generate { common, rows } => {
            let (config, paths) = load_config(&common)?;
            stages::generate_stage(&config, &paths, rows)
        }
        Command::Evaluate(common) => {
            let (config, paths) = load_config(&common)?;
            stages::evaluate(&config, &paths)
        }
        Command::Ablate { common, seeds } => {
            let (mut config, paths) = load_config(&common)?;
            if let Some(seeds) = seeds {
                anyhow::ensure!(!seeds.is_empty(), "--seeds must not be empty");
                config.ablate.seeds = seeds;
            }
            stages::ablate(&config, &paths)
        }
        Command::Pipeline { common, force } => {
            let (config, paths) = load_config(&common)?;
            stages::pipeline(&config, &paths, force)
        }
    }
}
