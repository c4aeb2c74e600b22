//! Non-autonomous Ornstein-Uhlenbeck evolution operators on finite
//! truncations: propagators, Gaussian transition kernels, smoothing
//! derivatives, mild solutions of the backward problem, and regularity
//! estimators with exponent fits.

pub mod cli;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod mild;
pub mod model;
pub mod numeric;
pub mod propagator;
pub mod regularity;
pub mod report;
pub mod semigroup;

pub use error::{Error, Result};
