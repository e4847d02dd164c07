use rayon::ThreadPool;

use crate::error::{Error, Result};

/// Runs `f` inside a dedicated pool of `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool: ThreadPool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
