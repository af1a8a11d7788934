use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing or out of range. `key` is the dotted path.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    /// A trajectory produced a non-finite state; `tau` is the last good time.
    #[error("trajectory aborted: non-finite state after tau = {tau}")]
    Aborted { tau: f64 },

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("malformed input {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error stems from user input (config/usage) rather than a runtime fault.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
