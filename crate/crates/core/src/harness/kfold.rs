//! Seeded k-fold splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::noise::stream_rng;

const KFOLD_STREAM: u64 = 0xf01d;

/// One fold: sorted train and test row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the seed, then cuts contiguous test blocks whose sizes
/// differ by at most one.
pub fn kfold_split(n_samples: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if k > n_samples {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the number of samples ({n_samples})"
        )));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut stream_rng(seed, &[KFOLD_STREAM]));
    let base = n_samples / k;
    let extra = n_samples % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}
