use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),

    #[error("site {site} out of range for a chain of length {length}")]
    SiteOutOfRange { site: usize, length: usize },

    #[error("site {0} appears more than once in the Pauli string")]
    DuplicateSite(usize),

    #[error("chain length {length} exceeds the configured maximum {max}")]
    DimensionOverflow { length: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("inverse temperature must be finite and non-negative, got {0}")]
    InvalidBeta(f64),

    #[error("Kubo correlations need a thermal (Gibbs) ensemble")]
    NonThermalEnsemble,

    #[error("observable carries no weight in the ensemble (C(0) = 0)")]
    ZeroNorm,

    #[error("gap distribution has zero spread; a(epsilon) is undefined")]
    DegenerateSpread,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cache corruption in {}: {reason}", path.display())]
    CacheCorruption { path: PathBuf, reason: String },

    #[error("invariant violated [{check}]: {detail}")]
    InvariantViolation { check: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invariant(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvariantViolation {
            check: check.into(),
            detail: detail.into(),
        }
    }

    /// Process exit status used by the `corrflow` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvariantViolation { .. } => 2,
            Error::Config(_) | Error::Json(_) | Error::InvalidSpec(_) => 3,
            _ => 1,
        }
    }
}
