use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller broke an API precondition (for example `backward` on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("model format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Format(_) => 2,
            Error::Data(_) | Error::InsufficientData(_) => 3,
            Error::Numeric(_) | Error::Diverged { .. } => 4,
            Error::Io { .. } => 5,
            Error::Dimension(_) | Error::Contract(_) | Error::Parameter(_) => 6,
        }
    }
}
