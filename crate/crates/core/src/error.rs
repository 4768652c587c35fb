use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "context covariance is not positive definite \
         (dim={dim}, diag_scale={diag_scale}, offdiag_corr={offdiag_corr})"
    )]
    NotPositiveDefinite {
        dim: usize,
        diag_scale: f64,
        offdiag_corr: f64,
    },

    #[error("cost distribution is not regular: virtual cost fails to increase near c={at}")]
    Irregular { at: f64 },

    #[error("value {value} lies outside the support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("empty input")]
    Empty,

    #[error("no provider is allocated")]
    NoWinner,

    #[error("round {round} was already recorded (last recorded round {last})")]
    DuplicateRound { round: u64, last: u64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
