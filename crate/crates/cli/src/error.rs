use std::io;

use tagvocab::fit::FitError;
use tagvocab::growth::GrowthError;
use tagvocab::ingest::IngestError;
use tagvocab::io::TsvError;
use tagvocab::stats::StatsError;
use tagvocab::synth::SynthError;
use thiserror::Error;

/// Every failure the binary reports, prefixed by the module it came from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cli: {0}")]
    Usage(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("io: {0}")]
    Tsv(#[from] TsvError),
    #[error("config: {0}")]
    Config(String),
    #[error("clock_growth: {0}")]
    Growth(#[from] GrowthError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("fit: {0}")]
    Fit(String),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("cli: {0}")]
    Analysis(String),
}

impl<T: std::fmt::Debug> From<FitError<T>> for CliError {
    fn from(e: FitError<T>) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl CliError {
    /// 1 usage, 2 input or parse failure, 3 analysis precondition.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Synth(_) => 1,
            CliError::Ingest(IngestError::InvalidPolicy { .. }) => 1,
            CliError::Ingest(_) | CliError::Io(_) | CliError::Tsv(_) | CliError::Config(_) => 2,
            CliError::Growth(GrowthError::Sampling(_)) => 1,
            CliError::Growth(_) | CliError::Stats(_) | CliError::Fit(_) | CliError::Analysis(_) => 3,
        }
    }

    /// The reader of our standard output went away (`... | head`).
    pub fn is_broken_pipe(&self) -> bool {
        match self {
            CliError::Io(e) | CliError::Tsv(TsvError::Io(e)) => e.kind() == io::ErrorKind::BrokenPipe,
            _ => false,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
