//! `treetune`: tune, compare and inspect decision-tree learners.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod source;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "treetune", version, about = "Hyperparameter tuning of decision-tree learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a nested cross-validation experiment.
    Tune(TuneArgs),
    /// Compare arms within and across experiments.
    Compare(CompareArgs),
    /// fANOVA importance of hyperparameters from trial logs.
    Importance(ImportanceArgs),
    /// Data-complexity profile and tuning advice.
    Complexity(ComplexityArgs),
    /// Fit one tree on a whole dataset.
    Fit(FitArgs),
    /// Print a fitted tree.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// `openml:<id>`, an ARFF file or a CSV file.
    pub dataset: String,
    /// Class column of a CSV file, by name or 0-based index; last by default.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// j48, cart or ctree.
    pub learner: String,
    /// Arms to run: rs, ga, pso, eda, smbo, irace, defaults.
    #[arg(required = true)]
    pub arms: Vec<String>,
    #[arg(long, default_value_t = 900)]
    pub budget: usize,
    /// Repetition seeds: `1..5`, `1..=5` or `1,4,9`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Use the full 30 repetitions when `--seeds` is absent.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 10)]
    pub outer_k: usize,
    #[arg(long, default_value_t = 3)]
    pub inner_k: usize,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Report files or directories holding them.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct ImportanceArgs {
    /// Trial logs or directories holding them.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 0.005)]
    pub filter: f64,
    /// Only use trials of this technique.
    #[arg(long)]
    pub technique: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Space file to use instead of the one stored beside the logs.
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ComplexityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Advise for this learner only.
    #[arg(long)]
    pub learner: Option<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    pub learner: String,
    /// Hyperparameters as `name=value` pairs over the defaults.
    #[arg(long = "set", default_value = "")]
    pub assignments: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Where to write the model; printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub model: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::runtime("cli", e.to_string()))?;
    }
    let json = cli.json;
    match cli.command {
        Command::Tune(a) => commands::tune(&a, json),
        Command::Compare(a) => commands::compare(&a, json),
        Command::Importance(a) => commands::importance(&a, json),
        Command::Complexity(a) => commands::complexity(&a, json),
        Command::Fit(a) => commands::fit(&a, json),
        Command::Inspect(a) => commands::inspect(&a, json),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
