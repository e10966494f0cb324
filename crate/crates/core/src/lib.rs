//! Evidential uncertainty for dense 3D pointmap regression.
//!
//! The crate is `no_std` and needs only `alloc`. IO, file formats and the
//! command-line driver live in the `evident` crate.

#![no_std]
// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod alignment;
pub mod datagen;
pub mod error;
pub mod evidential;
pub mod exec;
pub mod grid;
pub mod metrics;
pub mod predictor;
pub mod refinement;
pub mod special;

pub use error::{CoreError, Result};
