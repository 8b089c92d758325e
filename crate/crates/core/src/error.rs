use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("no unique stationary distribution: {0}")]
    NoUniqueStationary(String),

    #[error("enumeration too large: {requested} states exceeds cap {cap}")]
    EnumerationTooLarge { requested: u128, cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("marginal sums differ: left {left} vs right {right}")]
    MarginalMismatch { left: f64, right: f64 },

    #[error("zero residual mass: marginals coincide")]
    ZeroResidualMass,

    #[error("cost domain error: {0}")]
    CostDomain(String),

    #[error("singular mixed derivative: {0}")]
    Singular(String),

    #[error("gradient inversion failed: {0}")]
    Inversion(String),

    #[error("point off tabulated grid: {0}")]
    OffGrid(String),

    #[error("potential not convex: {0}")]
    NotConvex(String),

    #[error("c-supergradient empty at window {window:?} (gap {gap:e})")]
    EmptySupergradient { window: Vec<usize>, gap: f64 },

    #[error("path too short: length {len}, need at least {needed}")]
    PathTooShort { len: usize, needed: usize },

    #[error("unsupported field kind: {0}")]
    UnsupportedField(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
