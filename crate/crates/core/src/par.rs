//! Ordered fan-out used by the trainer and evaluator.
//!
//! `threads == 1` is the strictly serial reproducibility reference; any other
//! value fans out on a rayon pool. Outputs always come back in job order, so
//! serial and parallel execution are bit-identical as long as each job is
//! deterministic in its own derived seed.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Map jobs to outputs, preserving order.
pub(crate) fn ordered_map<T: Sync, O: Send, F: Fn(&T) -> O + Sync>(
    threads: usize,
    jobs: &[T],
    f: F,
) -> Vec<O> {
    if threads == 1 {
        jobs.iter().map(&f).collect()
    } else {
        jobs.par_iter().map(&f).collect()
    }
}

/// Dedicated pool for `threads > 1`; `0` uses the global pool, `1` none.
pub(crate) fn build_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    match threads {
        0 | 1 => Ok(None),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| Error::validation(format!("thread pool: {e}"))),
    }
}

/// Run `f` inside the pool when one exists.
pub(crate) fn install<O>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> O + Send) -> O
where
    O: Send,
{
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}
