use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax_cross_entropy, Model, Precision, Real};
use crate::data::{Augmentation, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    /// L2 coefficient; the loss gains `(weight_decay / 2) * |w|^2`.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            max_epochs: 30,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::InvalidConfig(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Seeded mini-batch sampler with optional augmentation.
#[derive(Debug, Clone)]
pub struct Batcher {
    batch_size: usize,
    augment: bool,
    rng: ChaCha8Rng,
}

impl Batcher {
    pub fn new(batch_size: usize, seed: u64, augment: bool) -> Self {
        Self {
            batch_size: batch_size.max(1),
            augment,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Shuffled sample order for one epoch, chunked into batches.
    pub fn epoch(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn iters_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// Gathers (and, if enabled, augments) the samples at `indices`.
    pub fn gather<T: Real>(&mut self, data: &Dataset, indices: &[usize]) -> (Vec<T>, Vec<u16>) {
        let shape = data.shape();
        let mut x = Vec::with_capacity(indices.len() * shape.len());
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if self.augment {
                let img = Augmentation::sample(&mut self.rng).apply(data.image(i), shape);
                x.extend(img.into_iter().map(|v| T::of(v as f64)));
            } else {
                x.extend(data.image(i).iter().map(|&v| T::of(v as f64)));
            }
            y.push(data.labels()[i]);
        }
        (x, y)
    }
}

/// Validation metrics on a full dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy, without the L2 term.
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<u16>,
}

/// Index of the largest logit in each row; ties go to the lower class.
pub(crate) fn argmax_rows<T: Real>(logits: &[T], n_classes: usize) -> Vec<u16> {
    logits
        .chunks_exact(n_classes)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u16
        })
        .collect()
}

/// Evaluates in order, `batch_size` samples at a time, without augmentation.
pub fn evaluate<T: Real>(model: &Model<T>, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    let mut loader = Batcher::new(batch_size, 0, false);
    let k = model.n_classes();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(loader.batch_size()) {
        let (x, y) = loader.gather::<T>(data, chunk);
        let logits = model.forward(&x, chunk.len())?.into_logits();
        let (loss, _) = softmax_cross_entropy(&logits, &y, k)?;
        loss_sum += loss.as_f64() * chunk.len() as f64;
        predictions.extend(argmax_rows(&logits, k));
    }
    let correct = predictions
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        predictions,
    })
}

pub fn predict<T: Real>(model: &Model<T>, data: &Dataset, batch_size: usize) -> Result<Vec<u16>> {
    Ok(evaluate(model, data, batch_size)?.predictions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_cover_every_sample_once() {
        let mut b = Batcher::new(4, 1, false);
        let batches = b.epoch(10);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b.iters_per_epoch(10), 3);
    }

    #[test]
    fn seeded_orders_repeat() {
        let mut a = Batcher::new(3, 7, false);
        let mut b = Batcher::new(3, 7, false);
        assert_eq!(a.epoch(20), b.epoch(20));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&[1.0f32, 1.0, 0.0, 0.0, 2.0, 2.0], 3), vec![0, 1]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
