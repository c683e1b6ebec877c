use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("recording has no voltage/current pair for rail `{0}`")]
    UnknownRail(String),

    #[error("channel `{channel}` has {found} readings, expected {expected}")]
    ChannelLength {
        channel: String,
        expected: usize,
        found: usize,
    },

    #[error("need at least {needed} samples, got {found}")]
    TooShort { needed: usize, found: usize },

    #[error("expected {expected} markers for {tasks} tasks, found {found}")]
    MarkerCount {
        tasks: usize,
        expected: usize,
        found: usize,
    },

    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),

    #[error("sample spacing mismatch: {0} s vs {1} s")]
    DtMismatch(f64, f64),

    #[error("constant input has zero variance")]
    ZeroVariance,

    #[error("permutation model is degenerate (information std is zero)")]
    DegeneratePermutationModel,

    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { k: usize, points: usize },

    #[error("no model for task `{0}`")]
    MissingModel(String),

    #[error("training set needs both classes")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("insufficient clean runs: need {needed}, have {found}")]
    InsufficientCleanRuns { needed: usize, found: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
