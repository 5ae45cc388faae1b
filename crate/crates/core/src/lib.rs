//! Noise-adding differential privacy mechanisms analysed under explicit
//! finite-precision semantics: fixed-point numbers, a discretized biased
//! uniform generator, exact output laws, and robustness budgets.

pub mod attacks;
pub mod distributions;
pub mod error;
pub mod geometry;
pub mod mechanisms;
pub mod numrep;
pub mod robustness;
pub mod ser;

pub use error::{Error, Result};
