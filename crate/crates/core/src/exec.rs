//! Per-sample fan-out used by the training and extraction loops.
//!
//! Implementations may evaluate the closures concurrently but must return
//! results in index order; every reduction over them is done sequentially
//! by the caller, so results do not depend on the executor.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}
