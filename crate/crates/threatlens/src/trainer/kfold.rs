//! Deterministic k-fold partitions.

use rand::seq::SliceRandom;

use super::TrainerError;
use crate::tensor::seeded_rng;

/// One cross-validation fold: disjoint train and validation index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Split `0..example_count` into `k` folds. Fold sizes differ by at most
/// one (the remainder spreads over the first folds), the validation sets
/// partition the index range, and the shuffle is deterministic under
/// `seed`.
pub fn kfold(example_count: usize, k: usize, seed: u64) -> Result<Vec<Fold>, TrainerError> {
    assert!(k >= 2, "k-fold needs at least two folds");
    if example_count < k {
        return Err(TrainerError::InsufficientData {
            have: example_count,
            need: k,
        });
    }
    let mut indices: Vec<usize> = (0..example_count).collect();
    let mut rng = seeded_rng(seed);
    indices.shuffle(&mut rng);

    let base = example_count / k;
    let remainder = example_count % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for fold_idx in 0..k {
        let size = base + usize::from(fold_idx < remainder);
        let val: Vec<usize> = indices[offset..offset + size].to_vec();
        let train: Vec<usize> = indices[..offset]
            .iter()
            .chain(&indices[offset + size..])
            .copied()
            .collect();
        folds.push(Fold { train, val });
        offset += size;
    }
    Ok(folds)
}
