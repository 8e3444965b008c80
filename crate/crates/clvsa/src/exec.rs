//! Sample-level parallelism switch.
//!
//! Gradient work parallelizes across independent samples, never inside one
//! graph: each sample builds its own tape, so tasks share nothing mutable.
//! With the `parallel` feature enabled and `jobs > 1`, the map runs on a
//! scoped rayon pool of exactly `jobs` threads; otherwise it runs serially.
//! Results always come back in input order, and any reduction over them is
//! performed by the caller in that order, so the two paths are bit-identical.

/// Maps `f` over `items`, in parallel when the build and `jobs` allow it.
///
/// `jobs == 0` or `1` forces the sequential path; so does building without
/// the `parallel` feature, in which case `jobs` only loses its effect.
pub fn ordered_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 && items.len() > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.min(items.len()))
                .build()
                .expect("thread pool construction does not fail for small thread counts");
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    items.iter().map(&f).collect()
}
