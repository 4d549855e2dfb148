use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::ImageShape;

pub const CIFAR10_MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR10_STD: [f32; 3] = [0.2023, 0.1994, 0.2010];

const CROP_PAD: usize = 4;

/// Per-channel `(x - mean) / std` over a buffer of channel-planar images.
pub fn normalize(images: &mut [f32], shape: ImageShape, mean: &[f32], std: &[f32]) -> Result<()> {
    if mean.len() != shape.channels || std.len() != shape.channels {
        return Err(Error::Shape(format!(
            "{} channels but {} means and {} stds",
            shape.channels,
            mean.len(),
            std.len()
        )));
    }
    if std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidConfig("normalization std must be > 0".into()));
    }
    let plane = shape.height * shape.width;
    for image in images.chunks_exact_mut(shape.len()) {
        for ((ch, &m), &s) in image.chunks_exact_mut(plane).zip(mean).zip(std) {
            for v in ch {
                *v = (*v - m) / s;
            }
        }
    }
    Ok(())
}

/// One draw of the random augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub hflip: bool,
    pub vflip: bool,
    /// Crop offsets into the 4-pixel zero-padded image, each in `0..=8`;
    /// `(4, 4)` is the identity crop.
    pub dx: usize,
    pub dy: usize,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        hflip: false,
        vflip: false,
        dx: CROP_PAD,
        dy: CROP_PAD,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            dx: rng.random_range(0..=2 * CROP_PAD),
            dy: rng.random_range(0..=2 * CROP_PAD),
        }
    }

    /// Flips, then crops the zero-padded result back to the original size.
    pub fn apply(&self, image: &[f32], shape: ImageShape) -> Vec<f32> {
        let (h, w) = (shape.height, shape.width);
        let mut out = vec![0.0; image.len()];
        for c in 0..shape.channels {
            let plane = &image[c * h * w..(c + 1) * h * w];
            let dst = &mut out[c * h * w..(c + 1) * h * w];
            for y in 0..h {
                // position in the flipped image
                let fy = y as isize + self.dy as isize - CROP_PAD as isize;
                if fy < 0 || fy >= h as isize {
                    continue;
                }
                let sy = if self.vflip { h - 1 - fy as usize } else { fy as usize };
                for x in 0..w {
                    let fx = x as isize + self.dx as isize - CROP_PAD as isize;
                    if fx < 0 || fx >= w as isize {
                        continue;
                    }
                    let sx = if self.hflip { w - 1 - fx as usize } else { fx as usize };
                    dst[y * w + x] = plane[sy * w + sx];
                }
            }
        }
        out
    }
}

/// Random horizontal flip, vertical flip (each p = 0.5) and 4-pixel pad-and-crop.
pub fn augment<R: Rng + ?Sized>(image: &[f32], shape: ImageShape, rng: &mut R) -> Vec<f32> {
    Augmentation::sample(rng).apply(image, shape)
}
