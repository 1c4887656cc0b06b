use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("truncation: population {population:e} at n_max = {n_max} exceeds tail tolerance {tolerance:e}")]
    Truncation {
        n_max: usize,
        population: f64,
        tolerance: f64,
    },

    #[error("infinite lifetime: loss per round trip is zero")]
    InfiniteLifetime,

    #[error("loss unidentifiable: the series does not depend on the loss per round trip")]
    LossUnidentifiable,

    #[error("histogram has no counts")]
    EmptyHistogram,

    #[error("bin edges and response matrix disagree")]
    EdgeMismatch,

    #[error("sampling table leaks {tail_mass:e} probability outside [{lo}, {hi}]")]
    TableTail { tail_mass: f64, lo: f64, hi: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: unsupported format_version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: String,
        expected: u32,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
