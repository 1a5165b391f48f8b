use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown alternative `{0}`")]
    UnknownAlternative(String),

    #[error("no pivot token found in the response")]
    NoPivot,

    #[error("ambiguous pivot starting at position {position}: matches {candidates:?}")]
    AmbiguousPivot {
        position: usize,
        candidates: Vec<String>,
    },

    #[error("alternative mass {mass:e} at pivot position {position} is below 1e-9")]
    MassTooSmall { position: usize, mass: f64 },

    #[error("pivot position {0} has no recorded top-K log-probabilities")]
    MissingTopK(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema version mismatch: file has v{found}, this build reads v{expected}")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("{path}: line {line}: {message}")]
    CorruptLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("network error: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
