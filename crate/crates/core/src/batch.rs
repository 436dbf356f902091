//! Batch evaluation across circuits or evaluation points.
//!
//! With the `parallel` feature, [`map`] fans out over rayon's pool; without it
//! (or through [`map_sequential`]) items are processed in order on the caller's
//! thread. Results are always returned in input order.

use crate::index::{analyze, AnalysisError, AnalysisOptions, IndexReport};
use crate::linalg::Vector;
use crate::nodal::SemiExplicitDAE;

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

/// Index analysis of many assembled circuits.
pub fn analyze_all(
    daes: &[SemiExplicitDAE],
    options: &AnalysisOptions,
) -> Vec<Result<IndexReport, AnalysisError>> {
    map(daes, |dae| analyze(dae, None, options))
}

/// Index analysis of one circuit at many evaluation points.
pub fn sweep_points(
    dae: &SemiExplicitDAE,
    points: &[Vector],
    options: &AnalysisOptions,
) -> Vec<Result<IndexReport, AnalysisError>> {
    map(points, |z| analyze(dae, Some(z.clone()), options))
}
