use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("instance too large for exhaustive search: {count} candidates exceed cap {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("optimal allocation is not unique ({ties} tied allocations)")]
    NonUniqueOptimum { ties: usize },

    #[error("integration produced non-finite values at t = {time}; reduce the step size")]
    NonFinite { time: f64 },

    #[error("search for the threshold time exceeded cap {cap}")]
    SearchCap { cap: f64 },

    #[error("learner protocol violation: {0}")]
    Protocol(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
