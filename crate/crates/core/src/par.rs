//! Deterministic fan-out helpers.
//!
//! Work is split into fixed chunks that are mapped in parallel (when the
//! `parallel` feature is on) and folded back together in chunk order, so the
//! result is bit-identical no matter how many threads run, including the
//! sequential build used on wasm targets.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over fixed-size chunks of `items`, returning the per-chunk
/// results in chunk order.
pub(crate) fn chunked_map<T, R, F>(items: &[T], chunk_size: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    debug_assert!(chunk_size > 0);
    #[cfg(feature = "parallel")]
    {
        items.par_chunks(chunk_size).map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(chunk_size).map(|c| f(c)).collect()
    }
}

/// Computes `f(0), f(1), ..., f(n-1)` and returns the results in index order.
pub(crate) fn indexed_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
