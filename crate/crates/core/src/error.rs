use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: header mismatch: expected [{expected}], found [{found}]")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("arity mismatch for {what}: expected {expected}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid comparison matrix: {0}")]
    Matrix(String),

    #[error("judgments rejected: consistency ratio {cr:.4} exceeds threshold {threshold}")]
    Inconsistent { cr: f64, threshold: f64 },

    #[error("R² undefined: test targets are constant")]
    ConstantTargets,

    #[error("state space of {states} states × {actions} actions exceeds tabulation limit {limit}")]
    TableTooLarge {
        states: usize,
        actions: usize,
        limit: usize,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
