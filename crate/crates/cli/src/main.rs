//! `sqlharness`: prepare corpora, query a model, and score text-to-SQL runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

mod commands;
mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: config, dataset, or arguments. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Something failed while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "sqlharness", version, about = "Text-to-SQL benchmarking harness")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "sqlharness.toml")]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides `run_id` in the config.
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// More logging (repeat for more).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the dataset, then write the run manifest.
    Ingest,
    /// Export fine-tuning corpora.
    BuildCorpus(commands::CorpusArgs),
    /// Query the model endpoint for every example of a split.
    Predict(commands::PredictArgs),
    /// Score predictions and write reports.
    Evaluate(commands::EvaluateArgs),
    /// Per-bucket differences between two summary CSVs.
    Compare(commands::CompareArgs),
    /// Write a fine-tuning hyperparameter profile.
    EmitTrainProfile(commands::ProfileArgs),
    /// Serve a local chat-completions stub.
    StubServer(commands::StubArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Plain,
    Csv,
    Json,
}

impl From<Format> for sqlharness::report::ReportFormat {
    fn from(f: Format) -> Self {
        use sqlharness::report::ReportFormat as R;
        match f {
            Format::Plain => R::PlainTable,
            Format::Csv => R::Csv,
            Format::Json => R::Structured,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr)
        .init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Ingest => commands::ingest(g),
        Command::BuildCorpus(a) => commands::build_corpus(g, &a),
        Command::Predict(a) => commands::predict(g, &a),
        Command::Evaluate(a) => commands::evaluate(g, &a),
        Command::Compare(a) => commands::compare(&a),
        Command::EmitTrainProfile(a) => commands::emit_profile(g, &a),
        Command::StubServer(a) => commands::stub_server(g, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
