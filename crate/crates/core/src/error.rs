use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Label spaces, row widths or model lists that do not line up.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    /// Numeric precondition violated (non-finite input, empty set, P < 1, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A gold label is missing for an example that needs one.
    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for this error: 1 for I/O (internal) failures,
    /// 2 for usage and validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
