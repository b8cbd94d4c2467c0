use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use medsel::study::Method;

#[derive(Debug, Parser)]
#[command(name = "medsel", version, about = "Simulate, fit and score high-dimensional mediator selection studies")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed; overrides the one in the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Maximum number of worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset and its ground truth from a simulation config.
    Simulate,
    /// Fit one method to a dataset.
    Fit(FitArgs),
    /// Score method summaries against a ground-truth file.
    Evaluate(EvaluateArgs),
    /// Run a replicated study: simulate, fit every method, score, aggregate.
    Replicate,
    /// Calibrate PTG thresholds to a prior active proportion.
    CalibrateLambda(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// gmm, ptg or bilasso.
    #[arg(long)]
    pub method: Method,
    /// Dataset CSV as written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Check state invariants after every scan.
    #[arg(long)]
    pub check_invariants: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Summary CSV; the method id is the file stem without `_summary`.
    #[arg(long = "summary", required = true)]
    pub summaries: Vec<PathBuf>,
    /// Truth CSV as written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// PIP cutoffs for the selection metrics.
    #[arg(long, value_delimiter = ',', default_values_t = medsel::metrics::DEFAULT_CUTOFFS)]
    pub cutoffs: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub replicate_id: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Latent outcome-effect variance.
    #[arg(long, conflicts_with = "data")]
    pub tau_beta2: Option<f64>,
    /// Latent exposure-effect variance; defaults to `--tau-beta2`.
    #[arg(long, conflicts_with = "data")]
    pub tau_alpha2: Option<f64>,
    /// Take both variances from the empirical-Bayes estimate on this dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target prior proportion of active mediators.
    #[arg(long, default_value_t = 0.01)]
    pub target: f64,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
}
