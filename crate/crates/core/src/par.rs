//! Data-parallel map helpers with a sequential fallback.
//!
//! All parallel work in this crate goes through `map_indexed`: an ordered
//! collect of independent per-index computations. Results are positionally
//! identical to the sequential path, so outputs stay bitwise reproducible
//! regardless of thread count or scheduling. Reductions that would reorder
//! floating-point sums are never parallelized.
//!
//! Building with `--no-default-features` drops the rayon dependency and turns
//! every call into the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the parallel dispatch overhead is not worth paying.
pub const PARALLEL_THRESHOLD: usize = 32;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= PARALLEL_THRESHOLD {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Sequential twin of [`map_indexed`]; kept callable in all builds so the
/// bench suite can compare both paths.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. `None` leaves the default. Calling this
/// more than once is harmless; later calls are ignored by rayon.
pub fn configure_workers(workers: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = workers {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
    }
}
