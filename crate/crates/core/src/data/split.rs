use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Stratified `train:valid` split.
///
/// The train total is `round(n * train / (train + valid))`; it is shared out
/// across classes by largest remainder so the per-class counts stay
/// proportional. Within each class, samples are shuffled with `seed`.
pub fn split(dataset: &Dataset, train: usize, valid: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if train == 0 || valid == 0 {
        return Err(Error::InvalidConfig(format!("split ratio {train}:{valid} must be positive")));
    }
    let n = dataset.len();
    if n < train + valid {
        return Err(Error::Data(format!(
            "{n} samples cannot be split {train}:{valid}"
        )));
    }
    let denom = train + valid;
    let target = (2 * n * train + denom) / (2 * denom);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut quota: Vec<usize> = by_class.iter().map(|c| c.len() * train / denom).collect();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    // largest fractional remainder first, ties to the lower class id
    order.sort_by_key(|&c| std::cmp::Reverse((by_class[c].len() * train) % denom));
    let mut missing = target - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train_idx, mut valid_idx) = (Vec::new(), Vec::new());
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..q]);
        valid_idx.extend_from_slice(&members[q..]);
    }
    train_idx.sort_unstable();
    valid_idx.sort_unstable();
    Ok((dataset.subset(&train_idx)?, dataset.subset(&valid_idx)?))
}
