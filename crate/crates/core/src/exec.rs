//! Index-ordered work distribution.
//!
//! Sweeps hand their per-point work to an [`Executor`]; results always come
//! back in index order, so reductions are deterministic whatever runs them.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// `[f(0), f(1), …, f(n − 1)]`.
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
