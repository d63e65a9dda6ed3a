mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nioc::NiocError;

const CONFIG_HELP: &str = "\
CONFIGURATION FILE
  --config takes a JSON object; every key is optional and flags override it.
  The schema is versioned (current version 1) and shipped as
  docs/config.schema.json. Keys:
    schema_version    integer, must be 1 when present
    task              pendulum | cartpole | reaching | navigation | lightdark
    variant           full | partial | partial-fo
    method            ours | baseline | baseline-given-controls
    methods           list of methods
    theta             object of parameter values, e.g. {\"c_a\": 0.5}
    ranges            object of [lo, hi] sampling ranges per parameter
    n_datasets, n_traj, horizon, restarts, target, seed
    alpha             policy temperature
    c_grid            list of light costs for lightdark-study
    sigma, p          light-dark perceptual noise and effort preference
    include_controls  store applied controls in dataset.json
    out               output directory

EXIT CODES
  0 success, 2 configuration or I/O error, 3 solver failure,
  4 every optimizer restart failed.

ENVIRONMENT
  NIOC_SEED  seed used when neither --seed nor the config file sets one.";

#[derive(Parser, Debug)]
#[command(name = "nioc", version, about = "Simulate, fit and benchmark inverse optimal control models", after_long_help = CONFIG_HELP)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the agent's problem at θ and simulate trajectories.
    Simulate(SimulateArgs),
    /// Estimate θ from a dataset by maximum likelihood.
    Fit(FitArgs),
    /// Sample θ, simulate, fit and score over many datasets.
    Benchmark(BenchmarkArgs),
    /// Simulate partially and fully observable light-dark agents across
    /// light costs and fit σ, c and p.
    LightdarkStudy(StudyArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON configuration file (see --help).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed (falls back to NIOC_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Policy temperature.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of states per trajectory.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Reaching target index (0..8).
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub task: Option<String>,
    /// full | partial | partial-fo
    #[arg(long)]
    pub variant: Option<String>,
    /// Parameter values as name=value,...; unspecified ones take task defaults.
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    /// Store the applied controls in the dataset.
    #[arg(long)]
    pub include_controls: bool,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset written by `simulate`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub method: Option<String>,
    /// Model variant used for fitting (defaults to the dataset's).
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Restart sampling ranges as name=lo:hi,...
    #[arg(long)]
    pub ranges: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated methods.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub n_datasets: Option<usize>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Sampling ranges for θ and restarts as name=lo:hi,...
    #[arg(long)]
    pub ranges: Option<String>,
    /// Also write eval_timed.csv with per-fit wall times.
    #[arg(long)]
    pub with_times: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated light costs c.
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub methods: Option<String>,
}

fn exit_code(e: &NiocError) -> u8 {
    match e {
        NiocError::Io(_)
        | NiocError::Json(_)
        | NiocError::InvalidInput(_)
        | NiocError::UnknownTask(_)
        | NiocError::UnsupportedVariant { .. }
        | NiocError::MissingParameter(_)
        | NiocError::NonPositiveParameter { .. }
        | NiocError::DimensionMismatch(_)
        | NiocError::DivisionByZero(_) => 2,
        NiocError::AllRestartsFailed => 4,
        NiocError::SingularCovariance { .. }
        | NiocError::NotPositiveSemidefinite { .. }
        | NiocError::NonFiniteValue { .. }
        | NiocError::DivergedValueRecursion { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot set up {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::LightdarkStudy(a) => commands::lightdark_study(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
