use thiserror::Error;

/// Errors raised by the solvers and their inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid survival function: {0}")]
    InvalidSurvival(String),

    #[error("grid function not monotone at node {index} ({left} > {right})")]
    NotMonotone { index: usize, left: f64, right: f64 },

    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),

    #[error(
        "boundary at t = {t} lies outside the spatial grid [{x_min}, {x_max}]; \
         try half_width_sigmas >= {suggested_sigmas}"
    )]
    GridTooNarrow {
        t: f64,
        x_min: f64,
        x_max: f64,
        suggested_sigmas: f64,
    },

    #[error("mesh for level {level} exceeds the cap of {cap} points")]
    MeshTooLarge { level: usize, cap: usize },

    #[error("root not bracketed at s = {s}: {detail}")]
    NotBracketed { s: f64, detail: String },

    #[error("mismatched lengths: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
