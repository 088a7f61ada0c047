//! Data-parallel execution of independent work items.
//!
//! Results are always collected in index order, so output is identical
//! whether items run sequentially or on any number of rayon workers. The
//! `parallel` cargo feature controls whether rayon is compiled in at all;
//! [`ExecPolicy::Sequential`] forces the serial path at run time (used by
//! the benchmark suite to compare both).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to schedule independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    /// Rayon data parallelism when the `parallel` feature is enabled,
    /// otherwise sequential.
    #[default]
    Auto,
    /// In-order execution on the calling thread.
    Sequential,
}

/// Applies `f` to `0..n` and returns the results in index order.
pub fn map_indexed<T, F>(policy: ExecPolicy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match policy {
        ExecPolicy::Sequential => (0..n).map(f).collect(),
        ExecPolicy::Auto => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Runs `f` inside a rayon pool of `workers` threads (0 = rayon default).
/// Without the `parallel` feature the worker count is ignored.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}
