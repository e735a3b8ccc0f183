//! Index-parallel map with a sequential fallback.
//!
//! Results are always collected in index order, so callers get the same
//! output whether or not the `parallel` feature is enabled and regardless of
//! the size of the rayon pool.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for every `i` in `0..n` and returns the results in order.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Like [`map_indices`] for fallible closures; the error reported is the one
/// with the smallest index.
pub fn try_map_indices<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(n, f).into_iter().collect()
}
