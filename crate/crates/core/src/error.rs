use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown id: {0}")]
    Lookup(String),

    #[error("dangling reference at line {line}: {message}")]
    DanglingReference { line: usize, message: String },

    #[error("malformed taxonomy: {0}")]
    Structure(String),

    #[error("singular system ({0}); use a regularization weight > 0")]
    Singular(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged in epoch {epoch}: {what} is not finite")]
    Divergence { epoch: usize, what: String },

    #[error("key mismatch: {0}")]
    Alignment(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("worker task failed: {0}")]
    Task(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Range(_)
            | Error::Lookup(_)
            | Error::DanglingReference { .. }
            | Error::Structure(_)
            | Error::Shape(_)
            | Error::Alignment(_)
            | Error::UndefinedMetric(_) => 2,
            Error::Singular(_) | Error::Divergence { .. } | Error::Task(_) => 3,
        }
    }
}
