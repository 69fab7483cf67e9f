use std::io;
use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by all toolkit modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file problem, with the offending line when known.
    #[error("config error in {path}, line {line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A hardware schedule or lane search has no feasible solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("malformed {what} file {path}: {message}")]
    Format {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for config/input errors, 3 for
    /// numerical infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            _ => 2,
        }
    }
}
