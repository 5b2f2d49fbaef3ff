//! Execution strategy for grid and trial evaluations.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] maps over
//! indices with rayon; without it, or with [`Execution::Sequential`], the
//! same closure runs in a plain loop. Results are always returned in index
//! order, so both strategies produce identical output.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon support.
    pub fn available_parallel() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Evaluates `f(0), …, f(n−1)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
