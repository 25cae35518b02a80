//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through [`map_range`], which
//! collects results in index order. Callers reduce the collected values
//! sequentially so floating-point sums do not depend on the thread count.

/// How an inner loop is executed.
///
/// `Parallel` silently degrades to sequential execution when the crate is
/// built without the `parallel` feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecPolicy {
    #[default]
    Parallel,
    Sequential,
}

impl ExecPolicy {
    /// True if this policy will actually use worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_range<T, F>(n: usize, policy: ExecPolicy, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = policy;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree_and_keep_order() {
        let sq = |i: usize| (i as f64).sqrt();
        let a = map_range(1000, ExecPolicy::Parallel, sq);
        let b = map_range(1000, ExecPolicy::Sequential, sq);
        assert_eq!(a, b);
        assert_eq!(a[81], 9.0);
    }
}
