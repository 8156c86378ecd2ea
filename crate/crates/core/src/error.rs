use thiserror::Error;

/// Errors raised by the sampler library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Every log-weight is `-inf` (or NaN), so no normalization exists.
    #[error("all particle weights are degenerate")]
    AllWeightsDegenerate,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Jittering the covariance did not produce a factorizable matrix.
    #[error("covariance matrix is not factorizable after regularization")]
    CovarianceNotFactorizable,

    #[error("invalid scaling {0}: Liu/West scaling must lie in (0, 1], random walk scaling must be positive")]
    InvalidScaling(f64),

    /// The log-target was not finite at the current state of a chain.
    #[error("log-target is not finite at the current state")]
    TargetEvaluationFailure,

    #[error("unknown dataset {0}; datasets are numbered 1 to 6")]
    UnknownDataset(usize),

    #[error("kernel menu is empty")]
    EmptyMenu,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("at least two runs are required, got {0}")]
    TooFewRuns(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
