//! Thin dispatch layer for the data-parallel cell loops.
//!
//! With the `parallel` feature (default) the loops run on rayon; without it
//! they fall back to plain iterators. Results are collected in index order in
//! both modes, so sums and assembled matrices are bitwise identical.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Reports which execution mode the crate was compiled with.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
