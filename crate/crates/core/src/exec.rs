//! Injectable parallelism.
//!
//! The core never spawns threads; callers pass an [`Executor`]. Results are
//! always returned in index order so reductions do not depend on scheduling.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// `(0..n).map(f).collect()`, possibly evaluated concurrently.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
