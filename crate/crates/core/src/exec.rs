//! Execution-strategy switch between the rayon data-parallel path and the
//! sequential fallback.
//!
//! Every parallel loop in this crate maps independent items to values and
//! collects them in index order, so the two strategies produce bit-identical
//! results; `Parallelism::Parallel` only changes wall time. Without the
//! `parallel` feature the parallel variant degrades to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

/// Maps `0..n` through `f` and collects results in index order.
pub fn map_collect<T, F>(par: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match par {
        Parallelism::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => (0..n).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        Parallelism::Parallel => (0..n).map(f).collect(),
    }
}
