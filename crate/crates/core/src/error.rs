use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the cognate pipeline.
///
/// Every variant maps onto one of the CLI's stable exit codes through
/// [`Error::exit_code`]: configuration and usage problems exit with 1,
/// problems with the data being processed exit with 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid word {word:?}: {reason}")]
    InvalidWord { word: String, reason: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::InvalidWord { .. }
            | Error::Training(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Json { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
