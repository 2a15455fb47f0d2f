//! Order-preserving map over independent jobs. With the `parallel` feature
//! the work is spread over the rayon pool; without it, or through
//! [`map_seq`], it runs on the calling thread. Results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_seq(items, f)
}

/// Dispatches to [`par_map`] or [`map_seq`].
pub fn map_with<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallel {
        par_map(items, f)
    } else {
        map_seq(items, f)
    }
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
