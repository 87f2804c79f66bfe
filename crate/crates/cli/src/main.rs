use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use affine_dpm::exec::with_workers;

mod commands;
mod config;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "affine-dpm",
    version,
    about = "Dirichlet process mixtures of Gaussians under affine transformations"
)]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (outputs do not depend on it). Defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// JSON settings: base, empirical_bayes, hyperprior, alpha, sampler, grid, maps, level, experiment, prop1, analyze.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Mog2d,
    StudentT,
    /// Rescale an existing data file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyArg {
    Table1,
    Fig2,
    Fig4,
    Prop1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic data set (data.csv).
    Simulate {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long)]
        n: Option<usize>,
        /// Rescaling constant applied to every observation.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Source file for `--scenario file`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the Gibbs sampler (draws.jsonl, draws.meta.json, traces.csv).
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Posterior predictive density on a grid (density.csv).
    Density {
        #[arg(long)]
        draws: PathBuf,
        /// Data file used to place the grid when the config has no axes.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// L1 and Hellinger distances between fits mapped back to a common scale
    /// (compare.json, compare_matrix.csv).
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        draws: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Partition summaries (partition.json, psm.csv, credible_ball.json).
    Cluster {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Replicate study reproducing a table or figure.
    Experiment {
        #[arg(long, value_enum)]
        study: StudyArg,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
    /// Standardize, check the robustness condition, fit and cluster a data file.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Column holding reference labels (name or zero-based index).
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Re-run the command recorded in a manifest and compare output hashes.
    Rerun { manifest: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match with_workers(workers, || commands::run(&cli, &raw)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
