use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Worker pool for embarrassingly parallel maps. Results are collected in
/// index order, so output never depends on the worker count.
#[derive(Debug)]
pub struct Workers {
    pool: Option<ThreadPool>,
}

impl Workers {
    pub fn serial() -> Self {
        Self { pool: None }
    }

    /// `count <= 1` runs on the calling thread.
    pub fn new(count: usize) -> Self {
        if count <= 1 {
            return Self::serial();
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .expect("failed to build worker pool");
        Self { pool: Some(pool) }
    }

    pub fn count(&self) -> usize {
        self.pool.as_ref().map_or(1, ThreadPool::current_num_threads)
    }

    pub fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::serial()
    }
}
