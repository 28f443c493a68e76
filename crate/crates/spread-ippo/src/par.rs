//! Data-parallel helpers with a sequential fallback.
//!
//! With the default `parallel` feature these fan out over rayon; without it
//! they degrade to plain iterator loops. Both paths visit independent items
//! and collect in input order, so results are identical byte for byte.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when the crate was built with the rayon path enabled.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Map owned items to results, preserving input order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Map owned items to results, preserving input order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Pairwise map over a mutable slice zipped with a shared one, preserving
/// order; each pair is touched by exactly one task.
#[cfg(feature = "parallel")]
pub fn zip_map<A, B, R, F>(a: &mut [A], b: &[B], f: F) -> Vec<R>
where
    A: Send,
    B: Sync,
    R: Send,
    F: Fn(&mut A, &B) -> R + Sync + Send,
{
    a.par_iter_mut().zip(b.par_iter()).map(|(x, y)| f(x, y)).collect()
}

/// Pairwise map over a mutable slice zipped with a shared one, preserving
/// order; each pair is touched by exactly one task.
#[cfg(not(feature = "parallel"))]
pub fn zip_map<A, B, R, F>(a: &mut [A], b: &[B], f: F) -> Vec<R>
where
    F: Fn(&mut A, &B) -> R,
{
    a.iter_mut().zip(b.iter()).map(|(x, y)| f(x, y)).collect()
}
