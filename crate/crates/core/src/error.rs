//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: resolution {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("sample must contain at least one curve")]
    EmptySample,

    #[error("curve range {from}..={to} outside 1..={n}")]
    IndexOutOfRange { from: usize, to: usize, n: usize },

    #[error("invalid measure nu: {0}")]
    InvalidNu(String),

    #[error("profile has no value at lambda = {0}")]
    MissingProfileValue(f64),

    #[error(
        "threshold delta must be strictly positive: with delta = 0 the self-normalized \
         decision rule does not give an asymptotic level-alpha test"
    )]
    ZeroThreshold,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("normalizer `{normalizer}` requires quantiles of {expected}, got {found}")]
    QuantileKindMismatch {
        normalizer: String,
        expected: String,
        found: String,
    },

    #[error("quantile table has no entry for probability {0}")]
    QuantileNotTabulated(f64),

    #[error("quantile table was built for a different measure nu")]
    QuantileNuMismatch,

    #[error("cannot take a quantile of an empty draw set")]
    EmptyDraws,

    #[error("no admissible change point index for N = {n} and trim = {trim}")]
    EmptyAdmissibleRange { n: usize, trim: f64 },

    #[error("segment too short: {0}")]
    SegmentTooShort(String),

    #[error("measure nu puts mass at {min} which is below the required floor {floor}")]
    NuBelowFloor { min: f64, floor: f64 },

    #[error("bandwidth {bandwidth} must be smaller than the sample size {n}")]
    BandwidthTooLarge { bandwidth: usize, n: usize },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("units with fewer observations than basis functions: {0:?}")]
    InsufficientObservations(Vec<String>),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for violations of a mathematical precondition of a procedure
    /// (as opposed to malformed data or bad I/O).
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::ZeroThreshold
                | Error::EmptyAdmissibleRange { .. }
                | Error::SegmentTooShort(_)
                | Error::NuBelowFloor { .. }
                | Error::BandwidthTooLarge { .. }
                | Error::QuantileKindMismatch { .. }
                | Error::QuantileNuMismatch
                | Error::QuantileNotTabulated(_)
        )
    }
}
