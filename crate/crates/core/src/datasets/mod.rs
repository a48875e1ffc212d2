//! Dataset ingestion: MNIST IDX, CIFAR-10 binary batches, and a seeded
//! synthetic generator. Loaders are pure functions of file bytes; pixels
//! are normalized to [0, 1] by dividing by 255.

pub mod cifar;
pub mod mnist;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use cifar::load_cifar10_binary;
pub use mnist::{load_mnist_idx, write_mnist_idx};
pub use synthetic::make_synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images as a (n, channels, height, width) tensor in [0, 1] plus one class
/// index per image.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Data(format!(
                "dataset images must be (n, c, h, w), got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Data(format!(
                "image count {} does not match label count {}",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {} out of range for {} classes",
                bad, num_classes
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-image shape (channels, height, width).
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// One image as a (c, h, w) tensor.
    pub fn image(&self, index: usize) -> Tensor {
        let (c, h, w) = self.image_shape();
        let stride = c * h * w;
        Tensor::new(
            vec![c, h, w],
            self.images.data()[index * stride..(index + 1) * stride].to_vec(),
        )
        .expect("image slice")
    }

    /// Batch of images for the given indices as an (k, c, h, w) tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let (c, h, w) = self.image_shape();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
        }
        Tensor::new(vec![indices.len(), c, h, w], data).expect("batch assembly")
    }

    /// First `n` samples (all samples when `n` is 0 or exceeds the set).
    pub fn take(&self, n: usize) -> LabeledDataset {
        if n == 0 || n >= self.len() {
            return self.clone();
        }
        let (c, h, w) = self.image_shape();
        let stride = c * h * w;
        LabeledDataset {
            images: Tensor::new(
                vec![n, c, h, w],
                self.images.data()[..n * stride].to_vec(),
            )
            .expect("subset"),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// Split off the first `n` samples as Train, the remainder as Test.
    pub fn split_at(self, n: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} samples at {}",
                self.len(),
                n
            )));
        }
        let (c, h, w) = self.image_shape();
        let stride = c * h * w;
        let train = LabeledDataset {
            images: Tensor::new(
                vec![n, c, h, w],
                self.images.data()[..n * stride].to_vec(),
            )?,
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            split: Split::Train,
        };
        let rest = self.len() - n;
        let test = LabeledDataset {
            images: Tensor::new(
                vec![rest, c, h, w],
                self.images.data()[n * stride..].to_vec(),
            )?,
            labels: self.labels[n..].to_vec(),
            num_classes: self.num_classes,
            split: Split::Test,
        };
        Ok((train, test))
    }
}
