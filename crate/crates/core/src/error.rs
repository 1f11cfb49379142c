use std::io;

use thiserror::Error;

/// Errors raised anywhere in the imputation pipeline.
///
/// Variants fall into three families that the CLI maps onto distinct exit
/// codes: configuration problems, data problems and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("pattern index {index} out of range (K = {count})")]
    PatternIndex { index: usize, count: usize },

    #[error("column {column} has no observed entries")]
    EmptyColumn { column: usize },

    #[error("pattern {pattern} has no observed columns; rows missing every feature cannot be imputed")]
    FullyMissingPattern { pattern: usize },

    #[error(
        "no complete cases ({found} found, at least {required} needed); \
         use the iterative imputer with a non-GAN initial imputation"
    )]
    NoCompleteCases { found: usize, required: usize },

    #[error("training pool for pattern {pattern} has {rows} rows, at least 2 are required")]
    SmallTrainingPool { pattern: usize, rows: usize },

    #[error("no generator for pattern {pattern}")]
    MissingGenerator { pattern: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("design matrix is rank deficient: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },

    #[error("too few rows: {rows} available, {required} required")]
    TooFewRows { rows: usize, required: usize },

    #[error("need at least 2 imputations for pooling, got {0}")]
    TooFewImputations(usize),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint parse error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Numeric(_) | Error::RankDeficient { .. } => 4,
            _ => 3,
        }
    }
}
