//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the heavy loops run on rayon's
//! global pool; without it, or when a caller asks for
//! [`Execution::Sequential`], the same closures run in a plain loop. Every
//! helper returns results in index order, so reductions performed by the
//! caller never depend on scheduling.

/// Where a data-parallel loop runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon worker pool. Falls back to sequential when the `parallel`
    /// feature is disabled.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(i)` for `i in 0..n` and collects in index order.
#[cfg(feature = "parallel")]
macro_rules! map_range {
    ($exec:expr, $n:expr, $f:expr) => {{
        use rayon::prelude::*;
        let f = $f;
        match $exec {
            $crate::par::Execution::Parallel => (0..$n).into_par_iter().map(f).collect::<Vec<_>>(),
            $crate::par::Execution::Sequential => (0..$n).map(f).collect::<Vec<_>>(),
        }
    }};
}

#[cfg(not(feature = "parallel"))]
macro_rules! map_range {
    ($exec:expr, $n:expr, $f:expr) => {{
        let _ = $exec;
        (0..$n).map($f).collect::<Vec<_>>()
    }};
}

/// Index-ordered parallel map over `0..n`.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    map_range!(exec, n, f)
}

/// Fixed-order sum; callers hand in index-ordered partials.
pub fn ordered_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| acc + x)
}
