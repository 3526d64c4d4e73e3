use alloc::string::String;

/// Every failure the numeric core can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("total mass is zero or not finite")]
    ZeroMass,
    #[error("weights must be finite and nonnegative")]
    InvalidWeights,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` has no ground-truth map")]
    NoGroundTruth(String),
    #[error("task is already perturbed")]
    AlreadyPerturbed,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("tilt exponent {value:e} exceeds the overflow guard")]
    NumericalOverflow { value: f64 },
    #[error("couplings live on different supports")]
    SupportMismatch,
    #[error("coupling has zero entries")]
    ZeroEntries,
    #[error("invalid pairing: {0}")]
    BadPairing(String),
    #[error("operation is not available for {0}")]
    OutOfFamily(&'static str),
    #[error("conditional at support index {index} has no mass")]
    EmptyConditional { index: usize },
    #[error("no bridge mass near the query point at s = {s}")]
    DegenerateDenominator { s: f64 },
    #[error("particle slot count does not equal round(alpha * n)")]
    SlotCountMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
