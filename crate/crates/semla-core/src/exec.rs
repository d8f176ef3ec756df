//! Work distribution over independent items. With the `parallel` feature a
//! rayon pool sized by `SEMLA_THREADS` (or rayon's default) runs the map;
//! without it the same API maps sequentially. Output order is the input
//! order either way, so downstream reductions are deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
fn pool() -> &'static rayon::ThreadPool {
    use std::sync::OnceLock;
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("SEMLA_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("thread pool construction")
    })
}

/// Number of worker threads the maps below will use.
pub fn effective_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        pool().current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Maps `f` over `items`, returning results in input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        pool().install(|| items.par_iter().map(|t| f(t)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(|t| f(t)).collect()
    }
}

/// Maps `f` over `0..n`, returning results in index order. Callers derive
/// any randomness from the index so scheduling cannot leak into results.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        pool().install(|| (0..n).into_par_iter().map(|i| f(i)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
