use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuildError, ThreadPoolBuilder};
use tdf_core::FanOut;

/// Evaluates batch members on a dedicated pool of worker threads. Results come
/// back in input order whatever the completion order.
pub struct ThreadFanOut {
    pool: ThreadPool,
}

impl ThreadFanOut {
    pub fn new(threads: usize) -> Result<Self, ThreadPoolBuildError> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("tdf-eval-{i}"))
            .build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl FanOut for ThreadFanOut {
    fn map<T: Sync, R: Send>(&self, inputs: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        self.pool.install(|| inputs.par_iter().map(f).collect())
    }
}
