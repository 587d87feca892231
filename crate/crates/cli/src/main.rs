//! `ellagnn` — operator surface for the graph-learning engine.
//!
//! Subcommands: `ingest`, `select`, `train`, `infer`, `augment-cache`,
//! `eval`. Every run is driven by CLI flags, an optional `--config run.json`
//! document, and built-in defaults, in that precedence order.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ellagnn", version, about = "Budgeted LLM-enhanced graph learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw dataset and emit its canonical form plus embeddings
    Ingest(commands::ingest::IngestArgs),
    /// Score nodes with a selection heuristic and write the candidate set
    Select(commands::select::SelectArgs),
    /// Train a model, optionally enhancing candidate nodes through an LLM
    Train(commands::train::TrainArgs),
    /// LLM-free inference from a checkpoint
    Infer(commands::infer::InferArgs),
    /// Pre-populate the enhancement cache for a candidate set
    AugmentCache(commands::augment::AugmentArgs),
    /// Intra-class similarity report for raw vs augmented features
    Eval(commands::eval::EvalArgs),
}

/// Error classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 1).
    Usage(String),
    /// Well-formed invocation over invalid data or config (exit 2).
    Validation(String),
    /// Everything that broke at runtime (exit 3).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ellagnn_core::Error> for CliError {
    fn from(err: ellagnn_core::Error) -> Self {
        use ellagnn_core::Error as E;
        match err {
            E::Argument(_) => CliError::Usage(err.to_string()),
            E::Parse { .. } | E::Validation(_) => CliError::Validation(err.to_string()),
            E::Io(_) | E::Transport(_) | E::Embedding(_) | E::Format(_) => {
                CliError::Runtime(err.to_string())
            }
        }
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Select(args) => commands::select::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::AugmentCache(args) => commands::augment::run(args),
        Command::Eval(args) => commands::eval::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
