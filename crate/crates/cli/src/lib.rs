//! Library side of the `textcast` binary: argument definitions, config
//! schema, commands and their file outputs.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input {path}: {message}")]
    BadInput { path: PathBuf, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Runtime {
        stage: &'static str,
        #[source]
        source: textcast::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(path: &Path, source: std::io::Error) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn bad_input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::BadInput {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn runtime(stage: &'static str) -> impl FnOnce(textcast::Error) -> CliError {
        move |source| CliError::Runtime { stage, source }
    }

    /// 2 for usage, config and input problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input { .. } | CliError::BadInput { .. } => 2,
            CliError::Runtime { .. } | CliError::Output { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "textcast", version, about = "Forecast daily time series from dated text documents")]
pub struct Cli {
    /// Base seed; overrides the seed in configs and specs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "textcast-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a series and a document file and write a normalized bundle.
    Ingest(IngestArgs),
    /// Generate a synthetic bundle with known word effects.
    Synth(SynthArgs),
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
    /// Word-level reports from the saved models of a previous run.
    Interpret(InterpretArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with a date column and a value column; sub-daily rows are
    /// averaged per day.
    #[arg(long)]
    pub series: PathBuf,
    /// JSON lines with `date` and `text` fields.
    #[arg(long)]
    pub documents: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_field: String,
    #[arg(long, default_value = "value")]
    pub value_field: String,
    #[arg(long, default_value = "none")]
    pub unit: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spec file (JSON, or TOML when the extension is `.toml`). Defaults
    /// to the built-in spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Word whose nearest neighbours are reported; repeatable.
    #[arg(long = "query")]
    pub queries: Vec<String>,
    /// Word always reported in neighbour tables; repeatable.
    #[arg(long = "probe")]
    pub probes: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
    #[arg(long, default_value_t = 50)]
    pub venn_k: usize,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &cli.out),
        Command::Synth(a) => commands::synth(a, cli.seed, &cli.out),
        Command::Run(a) => commands::run(a, cli.seed, &cli.out),
        Command::Interpret(a) => commands::interpret(a, &cli.out),
    }
}
