//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every strategy degrades to a plain sequential loop. Both
//! paths visit items in the same order and combine partial results in the
//! same order, so outputs are identical either way.

/// How a batch of independent items is processed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Sequential,
    /// Run on a dedicated pool of `threads` workers.
    Parallel { threads: usize },
}

impl Execution {
    /// `parallelism` of 1 means sequential.
    pub fn with_parallelism(parallelism: usize) -> Self {
        if parallelism <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads: parallelism }
        }
    }

    /// Uses every available core.
    pub fn all_cores() -> Self {
        let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Execution::with_parallelism(n)
    }

    /// Runs `f` inside this strategy's worker pool so that repeated
    /// [`Execution::map`] calls within it reuse the same threads.
    pub fn install<R, F>(&self, f: F) -> R
    where
        R: Send,
        F: FnOnce() -> R + Send,
    {
        match *self {
            Execution::Sequential => f(),
            Execution::Parallel { threads } => install(threads, f),
        }
    }

    /// Maps `f` over `items`, preserving input order in the output.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { threads } => par_map(threads, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if rayon::current_thread_index().is_some() {
        return items.par_iter().map(&f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("cannot build thread pool ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(feature = "parallel")]
fn install<R: Send, F: FnOnce() -> R + Send>(threads: usize, f: F) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build thread pool ({e}); running sequentially");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn install<R: Send, F: FnOnce() -> R + Send>(_threads: usize, f: F) -> R {
    f()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(_threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
