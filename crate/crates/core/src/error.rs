use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad feature file format: {0}")]
    Format(String),
    #[error("truncated feature file: {0}")]
    Truncation(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },
    #[error("size error: {0}")]
    Size(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("rank deficient: requested {requested} components but data has rank {rank}")]
    Rank { requested: usize, rank: usize },
    #[error("infeasible synthetic corpus: {0}")]
    Feasibility(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("misaligned matrices: {0}")]
    Align(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parameter,
    Data,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) | Error::Dim { .. } | Error::Size(_) | Error::Rank { .. } => {
                ErrorClass::Parameter
            }
            Error::Feasibility(_) | Error::Align(_) => ErrorClass::Parameter,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
