//! Fan-out of independent work items (sweep cells, seeds, prediction chunks).
//!
//! With the `parallel` feature the items run on the rayon pool; without it,
//! or with [`Execution::Sequential`], they run in order on the calling thread.
//! Either way results come back in input order and each item's computation is
//! unchanged, so outputs are identical across modes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True only when parallel execution is requested and compiled in.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if exec.is_parallel() {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(_exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Runs `f` inside a pool limited to `jobs` threads (`0` keeps the global pool).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R>(_jobs: usize, f: impl FnOnce() -> R) -> R {
    f()
}
