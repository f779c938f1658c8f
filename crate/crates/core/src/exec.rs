//! Order-preserving parallel map used for instance ensembles and
//! selection rounds.

use alloc::vec::Vec;

/// Evaluates `f(0..n)` and returns the results in index order, however the
/// work is scheduled.
pub trait Executor: Sync {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        (0..n).map(f).collect()
    }
}
