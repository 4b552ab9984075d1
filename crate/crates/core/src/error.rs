use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no usable rows in {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("instance too large for exact solver: {rows}x{cols} exceeds {limit} cells")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("malformed tree: {0}")]
    Tree(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Wraps an error with the language tag and pipeline phase it came from.
    #[error("[{phase}] language `{language}`: {source}")]
    Phase {
        phase: &'static str,
        language: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_phase(self, phase: &'static str, language: impl Into<String>) -> Self {
        Error::Phase {
            phase,
            language: language.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
