//! Worker pool for independent repeats.
//!
//! Every repeat draws from its own child stream of the master seed and the
//! results come back ordered by repeat index, so reductions done afterwards
//! are identical for any worker count.

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Result, SimError};

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn build_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Calibration(format!("cannot start worker pool: {e}")))
}

/// Evaluates `f` for every index in `range`, in parallel, returning results in
/// index order.
pub fn map_ordered<T, F>(pool: &ThreadPool, range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    pool.install(|| range.into_par_iter().map(&f).collect())
}
