//! Execution policy for the data-parallel loops.
//!
//! Every hot loop in the crate (grid stencils, per-mode SVDs, random sample
//! sweeps) goes through [`map_range`] or [`map_slice`]. With the `parallel`
//! feature the work is spread over the rayon pool; without it, or after
//! [`set_parallel(false)`](set_parallel), the same closures run sequentially
//! in index order. Results are identical either way: every task writes its
//! own output slot and reductions happen afterwards in a fixed order.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Switch between the rayon path and the sequential fallback at runtime.
/// Has no effect when the crate is built without the `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled && cfg!(feature = "parallel"), Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    PARALLEL.load(Ordering::SeqCst)
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let par = map_range(1000, |i| (i as f64).sqrt());
        set_parallel(false);
        let seq = map_range(1000, |i| (i as f64).sqrt());
        set_parallel(true);
        assert_eq!(par, seq);
        let doubled = map_slice(&seq, |x| 2.0 * x);
        assert_eq!(doubled[9], 6.0);
    }
}
