//! Index-ordered map over independent work items, data-parallel when the
//! `parallel` feature is on.
//!
//! Results always come back in index order, so any reduction done by the
//! caller is independent of the worker count.

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Like [`map_indexed`], with mutable per-item state.
pub fn map_with_state<S, T, F>(state: &mut [S], parallel: bool, f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && state.len() > 1 {
        use rayon::prelude::*;
        return state
            .par_iter_mut()
            .enumerate()
            .map(|(i, s)| f(i, s))
            .collect();
    }
    let _ = parallel;
    state.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
}

/// Runs `f` inside a pool of `threads` workers (or directly when the
/// `parallel` feature is off or `threads` is 1).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if threads > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}
