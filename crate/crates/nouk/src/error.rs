//! Crate-wide error type.
//!
//! One enum covers every failure mode of the toolkit; operations that wrap
//! others propagate variants unchanged so callers can match on the original
//! cause (e.g. `NotSmoothing` surfacing through a derivative estimate).

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("degenerate diffusion: b_{mode}(t0) = 0")]
    DegenerateDiffusion { mode: usize },

    #[error("derivative order {requested} unsupported (analytic order {available})")]
    UnsupportedOrder { requested: usize, available: usize },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("not smoothing: mode {mode} has null covariance but nonzero transported direction")]
    NotSmoothing { mode: usize },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("kernel component: index {index} lies in the covariance kernel")]
    KernelComponent { index: usize },

    #[error("not separable: {0}")]
    NotSeparable(String),

    #[error("method unavailable: {0}")]
    MethodUnavailable(String),

    #[error("divergent singularity: exponent {exponent} >= 1 in the time integral")]
    DivergentSingularity { exponent: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unsupported function: {0}")]
    UnsupportedFunction(String),

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
