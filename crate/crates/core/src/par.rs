//! Data-parallel map helpers.
//!
//! All hot loops in the crate (per-field feature computation, per-tree
//! ensemble fitting, per-fold evaluation) funnel through these functions.
//! With the `parallel` feature enabled they run on the ambient rayon pool;
//! without it they run sequentially. Results are always collected in index
//! order, so output is identical regardless of worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Maps `f` over a slice, returning results in element order.
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
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

/// True when this build runs the data-parallel code path.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Caps the worker pool at `n` threads. Call once, before any parallel
/// work; later calls fail. No-op in sequential builds.
pub fn configure_workers(n: usize) -> crate::error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::error::Error::InvalidConfig(format!("worker pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let out = map_indexed(100, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<i64> = (0..57).collect();
        let out = map_slice(&items, |v| v + 1);
        assert_eq!(out, (1..58).collect::<Vec<_>>());
    }
}
