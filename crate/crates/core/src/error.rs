use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown symbol {symbol:?} at position {position}")]
    UnknownSymbol { position: usize, symbol: String },

    #[error("requested {requested} problems, capacity is {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid config value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("missing column `{column}` in log `{log}`")]
    MissingColumn { log: String, column: String },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite {
        step: u64,
        what: String,
        dump: Option<PathBuf>,
    },

    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: u64, what: String },

    #[error("bad checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
