use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("closed form undefined: alpha ({alpha}) must exceed b/2 ({half_b})")]
    Domain { alpha: f64, half_b: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite action {value} at node {node}")]
    NonFiniteAction { node: usize, value: f64 },

    #[error("estimation undefined: {0}")]
    EstimationUndefined(&'static str),

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("denominator phi + k*dV/dx = {denominator:e} too small at node {node} (dV/dx = {dx_v})")]
    SmallDenominator { node: usize, dx_v: f64, denominator: f64 },

    #[error("delta PnL undefined: TWAP reference is zero")]
    ZeroReference,

    #[error("config error: {0}")]
    Config(String),

    #[error("training aborted after {0} consecutive failed epochs")]
    TooManyAborts(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field, reason: reason.into() }
    }

    pub(crate) fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }
}
