//! File formats, parallel pipelines and the `evident` command line on top of
//! `evident-core`.

// `!(x > 0.0)` is the NaN-rejecting form of the range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod darr;
pub mod error;
pub mod gradcheck;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod report;

pub use error::{EvidentError, Result};
