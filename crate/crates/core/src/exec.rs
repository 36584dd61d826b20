//! Data-parallel execution of independent tasks.
//!
//! Replications, Monte-Carlo batches and grid cells are mapped through
//! [`Exec::map`]. Results always come back in index order, so aggregation is
//! independent of the worker count. Without the `parallel` feature every
//! variant runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Parallel over a pool of `workers` threads; `0` means one per core.
    Parallel { workers: usize },
    /// Parallel over the global pool.
    #[default]
    Auto,
}

impl Exec {
    pub fn with_workers(workers: usize) -> Self {
        if workers == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { workers }
        }
    }

    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Auto => par_map(n, &f),
            #[cfg(feature = "parallel")]
            Exec::Parallel { workers } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("thread pool");
                pool.install(|| par_map(n, &f))
            }
            #[cfg(not(feature = "parallel"))]
            _ => (0..n).map(f).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}
