//! Data-parallel execution over independent work items. With the
//! `parallel` feature the items are spread over a rayon pool; without it, or
//! with a single worker, they run in order on the calling thread. Callers
//! keep results independent of the worker count by making every item's
//! work a pure function of the item.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

pub(crate) enum Executor {
    Sequential,
    #[cfg(feature = "parallel")]
    Pool(rayon::ThreadPool),
}

impl Executor {
    /// `workers == 0` picks the machine's available parallelism.
    pub(crate) fn new(workers: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let n = if workers == 0 {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            } else {
                workers
            };
            if n > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid("workers", e.to_string()))?;
                return Ok(Executor::Pool(pool));
            }
            Ok(Executor::Sequential)
        }
        #[cfg(not(feature = "parallel"))]
        {
            if workers > 1 {
                log::debug!("built without the `parallel` feature; running {workers} workers sequentially");
            }
            Ok(Executor::Sequential)
        }
    }

    pub(crate) fn for_each_mut<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(&mut T) + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter_mut().for_each(f),
            #[cfg(feature = "parallel")]
            Executor::Pool(pool) => {
                use rayon::prelude::*;
                pool.install(|| items.par_iter_mut().for_each(f))
            }
        }
    }

    pub(crate) fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Pool(pool) => {
                use rayon::prelude::*;
                pool.install(|| items.par_iter().map(f).collect())
            }
        }
    }
}
