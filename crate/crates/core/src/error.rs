use thiserror::Error;

/// Errors raised by the numeric core, the estimators and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),

    #[error("Newton iteration did not converge after {iterations} iterations")]
    DidNotConverge { iterations: usize },

    #[error("separation detected: |x'theta| exceeded 30 during logistic iteration")]
    SeparationDetected,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{method} is not supported for the {family} family")]
    FamilyUnsupported { method: &'static str, family: &'static str },

    #[error("zero variance in control variate")]
    ZeroVariance,

    #[error("{method} requires at least {required} unlabeled rows, found {found}")]
    InsufficientUnlabeled { method: &'static str, required: usize, found: usize },

    #[error("influence-function rows are empty")]
    EmptyInfluence,

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("{failures} of {replicates} replicates failed in scenario {scenario}")]
    FailureBudgetExceeded { scenario: String, failures: usize, replicates: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
