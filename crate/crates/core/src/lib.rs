//! Measurement and theory of mutual-information scaling in symbolic
//! sequences.

pub mod analytic;
pub mod audit;
pub mod benchmark;
pub mod copula;
pub mod error;
pub mod estimation;
pub mod fit;
pub mod format;
pub mod linear_rnn;
pub mod rng;
pub mod sequence;
pub mod special;

pub use error::{Error, Result};
