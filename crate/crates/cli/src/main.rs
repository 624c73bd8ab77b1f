mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use haptic_core::bench::{BenchArch, Method};
use haptic_core::ingest::SyntheticKind;
use haptic_core::{LossModel, Side};
use serde::{Deserialize, Serialize};

use run::{CliError, RunDir};

#[derive(Parser, Debug)]
#[command(name = "haptic", version, about = "GP-oracle haptic signal prediction toolkit")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, env = "HAPTIC_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,
    /// Name of the run directory; defaults to `<command>-<timestamp>`.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Worker threads (defaults to the machine's parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
    /// Re-run the command recorded in an `effective_config.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Parse and normalize a CSV trace, or generate a synthetic one.
    Ingest(IngestArgs),
    /// Fit the oracle GPs and train a network against them.
    Train(TrainArgs),
    /// Shapley feature values over the input channels and top-k selection.
    Shapley(ShapleyArgs),
    /// Run one inference episode.
    Predict(PredictArgs),
    /// Run the experiment grid and export report tables.
    Bench(BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Shapley(_) => "shapley",
            Command::Predict(_) => "predict",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Raw CSV file.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// JSON column mapping; canonical names are assumed when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Generate a synthetic trace instead of reading a file.
    #[arg(long)]
    pub synthetic: Option<SyntheticKind>,
    #[arg(long, default_value_t = 1000)]
    pub len: usize,
    #[arg(long, default_value_t = 0.001)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Side::Human)]
    pub side: Side,
    /// Keep raw units instead of standardizing every column.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchArg {
    Fc,
    Resnet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveArg {
    /// Match the GP predictive distributions.
    Jsd,
    /// Regress the observed next sample (all-features baseline).
    SquaredError,
}

/// Input channel selection shared by several commands.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FeatureArgs {
    /// Comma-separated channel names or indices, e.g. `fx,vx,px` or `0,3,6`.
    #[arg(long, conflicts_with = "subset")]
    pub features: Option<String>,
    /// `subset.json` written by the shapley command.
    #[arg(long)]
    pub subset: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Trace CSV (canonical or raw with canonical column names).
    #[arg(long)]
    pub trace: PathBuf,
    #[command(flatten)]
    pub select: FeatureArgs,
    #[arg(long, value_enum, default_value_t = ArchArg::Fc)]
    pub arch: ArchArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Jsd)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Training pairs used by each oracle GP.
    #[arg(long, default_value_t = 64)]
    pub gp_max_train: usize,
    #[arg(long, default_value_t = 200)]
    pub gp_fit_evals: usize,
    /// Cap on training windows for the network (0 keeps all).
    #[arg(long, default_value_t = 400)]
    pub max_windows: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Lower bound on oracle target variances (normalized units).
    #[arg(long, default_value_t = haptic_core::bench::DEFAULT_TARGET_VAR_FLOOR)]
    pub target_var_floor: f64,
    /// Gradient-norm clipping threshold; 0 disables clipping.
    #[arg(long, default_value_t = haptic_core::nn::DEFAULT_CLIP_NORM)]
    pub clip_norm: f64,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMethodArg {
    /// Exact for up to 12 features, sampled beyond.
    Auto,
    Exact,
    Sampled,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Trace from the opposite side; adds its nine channels as candidate features.
    #[arg(long)]
    pub other_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ShapleyMethodArg::Auto)]
    pub method: ShapleyMethodArg,
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub max_train: usize,
    #[arg(long, default_value_t = 64)]
    pub max_validation: usize,
    #[arg(long, default_value_t = 20)]
    pub fit_evals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorArg {
    Gp,
    Net,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// `model.json` from the train command; implies `--predictor net`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorArg>,
    /// `gp_bank.json` from the train command; fitted on the trace when absent.
    #[arg(long)]
    pub gp_bank: Option<PathBuf>,
    #[command(flatten)]
    pub select: FeatureArgs,
    /// none | drop-all | iid-drop:P[:SEED] | burst:LEN:GAP | fixed-delay:D
    #[arg(long, default_value = "none")]
    pub loss_model: LossModel,
    /// First index of the warm-up window; defaults to the end of the training split.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub blocks: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub block: usize,
    #[arg(long, default_value_t = 50)]
    pub refit_capacity: usize,
    #[arg(long, default_value_t = 20)]
    pub refit_evals: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub gp_max_train: usize,
    #[arg(long, default_value_t = 200)]
    pub gp_fit_evals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Full grid as JSON; the grid flags below are ignored when given.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "sine,drag,tap")]
    pub datasets: Vec<SyntheticKind>,
    #[arg(long, value_delimiter = ',', default_value = "fc,resnet,gp")]
    pub archs: Vec<BenchArch>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,gp,gp-sfv")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "human,robot")]
    pub sides: Vec<Side>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub len: usize,
    #[arg(long, default_value_t = 0.001)]
    pub noise_sd: f64,
    /// Seed of the synthetic traces (the run seeds derive from `--seed`).
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub timing_predictions: Option<usize>,
    #[arg(long)]
    pub episodes_per_run: Option<usize>,
    #[arg(long)]
    pub loss_model: Option<LossModel>,
    /// Time cells concurrently instead of one after another.
    #[arg(long)]
    pub parallel_timing: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    pub format: FormatArg,
}

fn main() -> ExitCode {
    // Exit code 2 belongs to ingest errors, so argument errors use 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(run::EXIT_OTHER) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let command = match (&cli.config, cli.command) {
        (Some(path), None) => run::load_effective_config(path)?,
        (None, Some(c)) => c,
        (Some(_), Some(_)) => return Err(CliError::usage("--config cannot be combined with a subcommand")),
        (None, None) => return Err(CliError::usage("a subcommand or --config is required")),
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    let dir = RunDir::create(&cli.output_root, cli.run_id.as_deref(), command.name())?;
    dir.write_json("effective_config.json", &command)?;
    let log = run::Log { verbose: cli.verbose };
    let started = chrono::Utc::now();
    let outcome = match &command {
        Command::Ingest(a) => commands::ingest(a, &dir, &log),
        Command::Train(a) => commands::train(a, &dir, &log),
        Command::Shapley(a) => commands::shapley(a, &dir, &log),
        Command::Predict(a) => commands::predict(a, &dir, &log),
        Command::Bench(a) => commands::bench(a, &dir, &log),
    };
    dir.write_run_record(command.name(), started, cli.threads, outcome.as_ref().err())?;
    outcome?;
    println!("{}", dir.path().display());
    Ok(())
}
