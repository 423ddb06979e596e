use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value is missing or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A document or file could not be parsed. `location` names where.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// An edit script was written against a map version that is no longer current.
    #[error("version conflict: script targets version {script}, map is at version {current}")]
    Conflict { script: u64, current: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a serde_json failure, keeping its line/column.
    pub(crate) fn json(context: &str, err: serde_json::Error) -> Self {
        Error::parse(
            format!("{context} line {} column {}", err.line(), err.column()),
            err.to_string(),
        )
    }
}
