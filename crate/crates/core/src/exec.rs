//! Batch execution over independent indices.
//!
//! With the `parallel` feature (default) work fans out over the rayon global
//! pool; without it everything runs on the calling thread. Results always come
//! back in index order, so output does not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..count` on the calling thread.
pub fn map_indexed_sequential<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Maps `f` over `0..count` on the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_indexed_parallel<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..count` using the configured backend.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_parallel(count, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_sequential(count, f)
    }
}

/// Same as [`map_indexed`] over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn backend_name() -> &'static str {
    if cfg!(feature = "parallel") {
        "rayon"
    } else {
        "sequential"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed_sequential(1000, |i| i * i);
        assert_eq!(map_indexed(1000, |i| i * i), seq);
        let items: Vec<u64> = (0..500).collect();
        assert_eq!(map_slice(&items, |v| v + 1), (1..501).collect::<Vec<_>>());
    }
}
