use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A configuration key carried a bad or missing value.
    #[error("config key `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("task error: {0}")]
    Task(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{0}")]
    Resolve(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn key(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::ConfigKey {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user input (configs, task files) rather
    /// than by a failure during training.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::ConfigKey { .. }
                | Error::Task(_)
                | Error::Parse { .. }
                | Error::Resolve(_)
                | Error::Io { .. }
                | Error::Format(_)
        )
    }
}
