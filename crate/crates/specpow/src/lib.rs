//! Fractional Gram powers `(GGᵀ)^{-a/b} G` by rational and polynomial
//! iterations, the spectral optimizer kernels built on them, descent
//! diagnostics and the random-feature testbed.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod iterations;
pub mod kaon;
pub mod linalg;
pub mod optimizers;
pub mod remez;
pub mod rfmodel;

pub use error::{Result, SpecError};
pub use linalg::{CostLedger, Mat, Precision};
