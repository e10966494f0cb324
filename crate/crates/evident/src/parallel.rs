//! Rayon-backed executor. Results come back in index order, so outputs do not
//! depend on the worker count.

use evident_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{EvidentError, Result};

pub const THREADS_ENV: &str = "EVIDENT_THREADS";

pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    /// `threads == 0` lets rayon pick (one per core).
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EvidentError::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Worker count from `EVIDENT_THREADS` (unset or 0 = automatic).
    pub fn from_env() -> Result<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse()
                .map_err(|_| EvidentError::Config(format!("{THREADS_ENV}='{v}' is not a non-negative integer")))?,
            _ => 0,
        };
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
