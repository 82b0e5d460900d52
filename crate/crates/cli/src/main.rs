//! `gagail`: teacher training, demonstration collection and labeling,
//! experiment runs, ablation grids and curve export.

mod curves;
mod grid;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_PARTIAL_GRID: u8 = 3;

/// A failure carrying the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<gagail::Error> for CliError {
    fn from(e: gagail::Error) -> Self {
        let code = match e {
            gagail::Error::Divergence(_) => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "gagail", version, about = "Goal-aware adversarial imitation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a teacher on the evaluation reward and save its checkpoints.
    Teach(TeachArgs),
    /// Collect demonstrations from a teacher checkpoint.
    Collect(CollectArgs),
    /// Select goal labels from a demonstration file.
    Label(LabelArgs),
    /// Run one experiment.
    Train(TrainArgs),
    /// Run a grid of experiments, one process per cell.
    Grid(GridArgs),
    /// Evaluate the final policy of a finished run.
    Eval(EvalArgs),
    /// Aggregate runs into per-method learning curves.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct TeachArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-key override, e.g. `teacher.sweeps=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    /// Output directory of `teach`.
    #[arg(long)]
    pub teacher: PathBuf,
    /// `imperfect` (earliest checkpoint with mixed success) or `perfect`
    /// (final checkpoint, every trajectory reaches the goal).
    #[arg(long, default_value = "imperfect")]
    pub quality: String,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Demonstration file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub demos: PathBuf,
    /// Any config file with an `[env]` table (teacher or experiment).
    #[arg(long)]
    pub config: PathBuf,
    /// `all_goals`, `last_of_best` or `one_best`.
    #[arg(long, default_value = "all_goals")]
    pub strategy: String,
    /// Share of trajectories counted as best by `last_of_best`.
    #[arg(long, default_value_t = 0.5)]
    pub top_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-key override, e.g. `soft.eta=0.25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Grid spec: base config, seeds, and arms of overrides.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cells run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Output directory of `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample actions from the softmax policy instead of acting greedily.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Directory searched recursively for `metrics.csv`.
    #[arg(long)]
    pub runs: PathBuf,
    /// Where curve files go; defaults to the runs directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Teach(a) => run::teach(&a),
        Command::Collect(a) => run::collect(&a),
        Command::Label(a) => run::label(&a),
        Command::Train(a) => run::train(&a),
        Command::Grid(a) => grid::run_grid(&a),
        Command::Eval(a) => run::eval(&a),
        Command::Export(a) => curves::export(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
