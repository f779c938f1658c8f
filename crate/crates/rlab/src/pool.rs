use rayon::prelude::*;
use rlab_core::Executor;

use crate::error::{Error, Result};

/// Worker pool backing [`Executor`]. Results come back in index order, so
/// output never depends on the number of workers.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        let f = &f;
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// `--workers`, else `RLAB_WORKERS`, else the available parallelism.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("RLAB_WORKERS") {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("RLAB_WORKERS={v:?} is not a worker count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
