use thiserror::Error;

/// Errors raised by the simulation models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A wavelength (or other scalar) fell outside the range a model is valid for.
    #[error("{quantity} = {value} is outside the valid range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The closed-form bandwidth diverges when both polarizations share a group index.
    #[error("group indices are degenerate (|n_gs - n_gi| = {0:e}); type-0/I phase matching is not supported")]
    DegenerateGroupIndex(f64),

    #[error("no root in bracket [{lo}, {hi}]: function does not change sign")]
    RootNotFound { lo: f64, hi: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("beat unidentifiable: visibility {visibility:.3e} is not distinguishable from 0 (stderr {stderr:.3e})")]
    BeatUnidentifiable { visibility: f64, stderr: f64 },

    #[error("insufficient sampling resolution: {0}")]
    Resolution(String),

    /// Heralded correlation is undefined because a double-coincidence tally is empty.
    #[error("insufficient statistics: n1={n1} n12={n12} n13={n13} n123={n123}")]
    InsufficientStatistics { n1: u64, n12: u64, n13: u64, n123: u64 },

    #[error("pair-number cutoff {cutoff} leaves tail mass {tail:.3e} (needs < 1e-12)")]
    TailMass { cutoff: usize, tail: f64 },

    #[error("target {target} is not achievable; achievable range is [{min}, {max}]")]
    Infeasible { target: f64, min: f64, max: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
