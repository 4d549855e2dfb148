//! Labeled image datasets, loaders and preprocessing.

mod blobs;
mod cifar;
mod split;
mod transform;

pub use blobs::{gaussian_blobs, BlobsSpec};
pub use cifar::{encode_cifar_record, load_cifar10, CIFAR10_CLASSES, CIFAR_RECORD_BYTES};
pub use split::split;
pub use transform::{augment, normalize, Augmentation, CIFAR10_MEAN, CIFAR10_STD};

use crate::error::{Error, Result};
use crate::nn::ImageShape;

/// Channel-planar `f32` images with class labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: ImageShape,
    images: Vec<f32>,
    labels: Vec<u16>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(shape: ImageShape, images: Vec<f32>, labels: Vec<u16>, class_names: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if shape.is_empty() || images.len() != labels.len() * shape.len() {
            return Err(Error::Shape(format!(
                "{} pixel values for {} images of shape {shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            shape,
            images,
            labels,
            class_names,
        })
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.shape.len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len() * self.shape.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Self::new(self.shape, images, labels, self.class_names.clone())
    }

    /// Applies `f` to the pixel buffer, keeping shape and labels.
    pub fn map_images(mut self, f: impl FnOnce(&mut [f32], ImageShape) -> Result<()>) -> Result<Self> {
        f(&mut self.images, self.shape)?;
        Ok(self)
    }
}
