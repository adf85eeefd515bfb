//! Order-preserving parallel map.
//!
//! With the `std` feature the work is spread over rayon; without it the
//! same closure runs serially. Outputs are collected in input order, so any
//! later reduction is performed in a fixed sequence and results do not
//! depend on scheduling.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
