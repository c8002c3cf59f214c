use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wedge rank overflow: {p} + {q} > 7")]
    RankOverflow { p: usize, q: usize },
    #[error("index slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },
    #[error("metric is singular (det = {0:e})")]
    SingularMetric(f64),
    #[error("metric is not symmetric (asymmetry {0:e})")]
    NonSymmetricMetric(f64),
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
    #[error("3-form is not positive: it does not define a G2-structure")]
    NotPositive,
    #[error("point {0:?} is outside the chart interior")]
    OutsideChart(Vec<f64>),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("conformal factor must be positive, found {0}")]
    NonPositiveFactor(f64),
    #[error("vector is not unit length (|p| = {0})")]
    NotUnit(f64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unknown closure `{0}` in the registry")]
    UnknownClosure(String),
    #[error("invalid specification: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
