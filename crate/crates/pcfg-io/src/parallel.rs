//! Parallelism handle passed into corpus-level operations.
//!
//! The CLI owns the thread pool; library code never spawns unmanaged
//! workers. `Sequential` is the reproducibility profile: corpus maps run in
//! index order on the calling thread, so floating-point aggregates are
//! byte-stable across runs.

use rayon::prelude::*;

/// How corpus-level loops execute.
#[derive(Default)]
pub enum Parallelism {
    #[default]
    Sequential,
    Pool(rayon::ThreadPool),
}

impl Parallelism {
    /// Builds a handle for `threads` workers; 1 selects the sequential path.
    pub fn with_threads(threads: usize) -> Self {
        if threads <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Pool(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool"),
            )
        }
    }

    /// Maps `f` over `0..n`, returning results in index order regardless of
    /// scheduling.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Parallelism::Sequential => (0..n).map(f).collect(),
            Parallelism::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
