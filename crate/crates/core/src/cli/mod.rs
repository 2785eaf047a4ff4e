//! `dfgppm` commands: ingest, train, evaluate, report.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod evaluate;
mod ingest;
mod report;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::dfg::DfgError;
use crate::eventlog::LogError;
use crate::gnn::GnnError;
use crate::metrics::MetricsError;
use crate::nncore::NnError;
use crate::training::TrainError;

pub use evaluate::{cmd_evaluate, EvaluateArgs};
pub use ingest::{cmd_ingest, load_cache, CacheManifest, IngestArgs, InputFormat, CACHE_MANIFEST};
pub use report::{cmd_report, ReportArgs, ReportFormat};
pub use train::{cmd_train, CheckpointMeta, ModelSection, RunConfig, TrainArgs, RUN_CONFIG};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Dfg(#[from] DfgError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint does not match the data: {0}")]
    Mismatch(String),
    #[error("no runs found under {0}")]
    NoRunsFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Json { .. }
            | CliError::Train(TrainError::InvalidConfig(_))
            | CliError::Gnn(GnnError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "dfgppm", version, about = "Next-activity and remaining-time prediction with GNNs over directly-follows graphs")]
pub struct Cli {
    /// Directory holding ingested caches when no explicit path is given.
    #[arg(long, global = true, env = "DFGPPM_CACHE_ROOT", default_value = "cache")]
    pub cache_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, split and fit feature normalizers; write a cache directory.
    Ingest(IngestArgs),
    /// Train one variant on one task; write a timestamped run directory.
    Train(TrainArgs),
    /// Evaluate a run's checkpoint on a cache partition.
    Evaluate(EvaluateArgs),
    /// Aggregate evaluation reports into comparison tables.
    Report(ReportArgs),
}

/// Runs a parsed command line. Returns the path the command produced.
pub fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args, &cli.cache_root),
        Command::Train(args) => cmd_train(&args, &cli.cache_root),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}
