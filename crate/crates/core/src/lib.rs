//! Streaming sketch-and-project solver for consistent linear systems, with
//! moving-average residual tracking, sub-Exponential uncertainty sets and a
//! stopping rule that bounds the probability of stopping too early or too late.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense matrices, symmetric eigensolver, pseudo-inverse, seeded RNG.
//! - [`subexp`]: sub-Exponential `(σ, ω)` parameters and tail bounds.
//! - [`sketch`]: Gaussian, Achlioptas, subsampled Hadamard and row-subset sketches.
//! - [`streams`]: i.i.d. observation sources, RBF collocation, test matrices.
//! - [`solver`]: one sketch-and-project update per observation.
//! - [`tracker`]: windowed estimates, uncertainty interval, stopping decision.
//! - [`harness`]: the tracked solve loop and the validation experiments.
//! - [`io`]: matrix/vector files, CSV traces and JSON summaries.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod io;
pub mod numerics;
pub mod sketch;
pub mod solver;
pub mod streams;
pub mod subexp;
pub mod tracker;

pub use error::{Error, Result};
