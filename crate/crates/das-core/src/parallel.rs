//! Data-parallel execution of ordered batch work.
//!
//! Batch loops (per-sample gradients, dataset synthesis, matrix cells) are
//! expressed as a map over an index range. With the `parallel` feature
//! (default) the map runs on rayon; without it the same closure runs
//! sequentially. Results are collected in index order and every reduction in
//! the crate folds them in that fixed order, so outputs are bit-identical
//! across modes and thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ordered map over `0..n`; parallel when the `parallel` feature is on.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential variant. Kept unconditionally so benchmarks can compare
/// both paths within one build.
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_elementwise() {
        let f = |i: usize| (i as f64).sin() * 1e6;
        let par = map_indexed(257, f);
        let seq = map_indexed_seq(257, f);
        assert_eq!(par, seq);
    }
}
