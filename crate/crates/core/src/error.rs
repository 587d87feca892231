//! Error type shared across the engine.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A malformed line in an input file, with its 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Structurally well-formed input that violates a data contract.
    #[error("validation: {0}")]
    Validation(String),

    /// A caller-supplied argument outside its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// LLM transport failure (connection, timeout, non-2xx, empty completion).
    #[error("llm transport: {0}")]
    Transport(String),

    /// Embedding service failure.
    #[error("embedding: {0}")]
    Embedding(String),

    /// Corrupt or incompatible checkpoint / feature file.
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
