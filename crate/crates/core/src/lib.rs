//! Semi-supervised emotion style tokens.
//!
//! The crate generates a synthetic emotional acoustic-feature corpus, trains
//! a small differentiable acoustic model whose emotion token layer is tied
//! to emotion categories through a cross-entropy term on a labeled subset,
//! and evaluates the result with DTW-aligned objective metrics (MCD, F0
//! RMSE, V/UV error, FFE) and token-weight emotion recognition.
//!
//! See `examples/` for one runnable program per capability.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod training;

pub use error::{Error, Result};
