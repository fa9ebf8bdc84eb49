//! Command-line front end: simulate studies, precompute normalization
//! constants, fit the clustering chain and summarize stored chains.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{KernelKind, Study};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<orderclust::Error> for CliError {
    fn from(e: orderclust::Error) -> Self {
        use orderclust::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Domain(_) | E::TooManyOrders { .. } => CliError::Config(msg),
            E::Evaluation(_) => CliError::Numeric(msg),
            E::Mismatch(_) | E::Parse(_) | E::InvalidOrder(_) | E::InvalidPartition(_) | E::Io(_) | E::Json(_) => {
                CliError::Data(msg)
            }
        }
    }
}

/// Clustering of time series by shared change points.
#[derive(Debug, Parser)]
#[command(name = "orderclust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic study: a CSV dataset and its true partition.
    Simulate(SimulateArgs),
    /// Estimate (or compute exactly) each series' order-posterior normalizer.
    NormConstants(ConstantsArgs),
    /// Run the split-merge chain and write the chain and its summaries.
    Fit(FitArgs),
    /// Recompute summaries from a stored chain.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Study to generate.
    #[arg(long, value_enum)]
    pub study: Option<Study>,
    /// Length of the OU series.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for `data.csv` and `truth.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset: wide CSV of series, or epidemic daily counts / event list.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    /// Days covered by an epidemic event list.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Standardize OU series (`true` or `false`).
    #[arg(long)]
    pub standardize: Option<bool>,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Importance draws per series.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Change-point probability of the importance law.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sum over all orders instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Output NDJSON file.
    #[arg(long, default_value = "constants.ndjson")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Constants file written by `norm-constants`.
    #[arg(long)]
    pub constants: Option<PathBuf>,
    /// Exact constants and exact component sampling (short series or OU).
    #[arg(long)]
    pub exact: bool,
    /// Iterations, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Split-merge steps per proposed order.
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Dirichlet concentration (default 1/2^(T-1)).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write `checkpoint.json` every this many iterations (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// True partition (`id,label` CSV) to score the estimate against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Chain NDJSON written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Records with iteration at most this are discarded.
    #[arg(long, default_value_t = 0)]
    pub burnin: usize,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::NormConstants(a) => commands::norm_constants(a),
        Command::Fit(a) => commands::fit(a),
        Command::Summarize(a) => commands::summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orderclust: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
