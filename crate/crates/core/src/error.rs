use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// PENMAN syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("penman parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("unalignable graph: no concept carries a token alignment")]
    Unalignable,

    #[error("invalid annotation: {0}")]
    Annotation(String),

    #[error("invalid REG: {0}")]
    InvalidReg(String),

    #[error("cycle detected among {0} unscheduled nodes")]
    Cycle(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("empty cost matrix")]
    EmptyMatrix,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
