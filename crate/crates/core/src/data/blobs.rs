use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::ImageShape;

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobsSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub dim: usize,
    /// Standard deviation of each center coordinate.
    pub separation: f64,
    /// Within-cluster standard deviation.
    pub spread: f64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            n_per_class: 600,
            dim: 16,
            separation: 2.0,
            spread: 1.0,
        }
    }
}

/// Samples are interleaved by class: `0, 1, .., k-1, 0, 1, ..`.
pub fn gaussian_blobs(spec: &BlobsSpec, seed: u64) -> Result<Dataset> {
    if spec.n_classes < 2 || spec.n_per_class == 0 || spec.dim == 0 {
        return Err(Error::InvalidConfig(format!("degenerate blobs spec {spec:?}")));
    }
    let centers_dist = Normal::new(0.0, spec.separation)
        .map_err(|e| Error::InvalidConfig(format!("blob separation: {e}")))?;
    let noise = Normal::new(0.0, spec.spread).map_err(|e| Error::InvalidConfig(format!("blob spread: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.dim).map(|_| centers_dist.sample(&mut rng)).collect())
        .collect();
    let n = spec.n_classes * spec.n_per_class;
    let mut images = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..spec.n_per_class {
        for (label, center) in centers.iter().enumerate() {
            images.extend(center.iter().map(|&c| (c + noise.sample(&mut rng)) as f32));
            labels.push(label as u16);
        }
    }
    Dataset::new(
        ImageShape::flat(spec.dim),
        images,
        labels,
        (0..spec.n_classes).map(|i| format!("blob{i}")).collect(),
    )
}
