//! Stratified k-fold splitting.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::trace::Dataset;

use super::EvalError;

/// One fold's (train, test) dataset positions.
pub type FoldIndices = (Vec<usize>, Vec<usize>);

/// Splits a dataset into k stratified folds: within every class the per-fold
/// counts differ by at most one. Returns (train, test) index pairs, one per
/// fold, partitioning the dataset. Deterministic for a fixed seed.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldIndices>, EvalError> {
    assert!(k >= 2, "need at least 2 folds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_members: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Labels iterate in sorted order, so the RNG consumption order is fixed.
    for label in ds.labels() {
        let mut indices: Vec<usize> = ds.indices_for(label).to_vec();
        if indices.len() < k {
            return Err(EvalError::ClassTooSmall {
                label: label.to_string(),
                have: indices.len(),
                need: k,
            });
        }
        indices.shuffle(&mut rng);
        for (i, idx) in indices.into_iter().enumerate() {
            fold_members[i % k].push(idx);
        }
    }
    let folds = (0..k)
        .map(|f| {
            let mut test = fold_members[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> = fold_members
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, m)| m.iter().copied())
                .collect();
            train.sort_unstable();
            (train, test)
        })
        .collect();
    Ok(folds)
}
