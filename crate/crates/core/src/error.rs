use std::path::PathBuf;

use thiserror::Error;

use crate::context_space::CubeId;

/// Errors raised by the library and the command-line harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid context coordinate {value} at axis {axis}: must lie in [0, 1]")]
    ContextOutOfRange { axis: usize, value: f64 },

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("no active cube contains the context (tree has {active} active cubes)")]
    NoActiveCube { active: usize },

    #[error("cube {0:?} has no statistics")]
    MissingCube(CubeId),

    #[error("peer {peer} failed to answer a request at slot {slot}")]
    PeerFault { peer: usize, slot: u64 },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("dataset file not found: {}", .0.display())]
    MissingDataset(PathBuf),

    #[error("too few points for slope fit: {0} (need at least 10)")]
    TooFewPoints(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
