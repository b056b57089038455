//! Execution strategy for embarrassingly parallel loops.
//!
//! The core only needs an ordered map over an index range. Results are
//! always returned in index order, so reductions done afterwards do not
//! depend on how the work was scheduled.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
