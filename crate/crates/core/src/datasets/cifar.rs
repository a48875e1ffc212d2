//! CIFAR-10 binary batches: 3073-byte records (1 label byte, then 3072
//! pixel bytes as full R, G, B planes of a 32x32 image).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const RECORD: usize = 3073;

pub fn load_cifar10_binary(batch_paths: &[impl AsRef<Path>], split: Split) -> Result<LabeledDataset> {
    if batch_paths.is_empty() {
        return Err(Error::InvalidArgument("no CIFAR-10 batch files given".into()));
    }
    let mut labels = Vec::new();
    let mut pixels: Vec<f64> = Vec::new();
    for path in batch_paths {
        let bytes = fs::read(path.as_ref())?;
        if bytes.len() % RECORD != 0 {
            return Err(Error::Data(format!(
                "{}: length {} is not a multiple of {}",
                path.as_ref().display(),
                bytes.len(),
                RECORD
            )));
        }
        for record in bytes.chunks_exact(RECORD) {
            let label = record[0];
            if label > 9 {
                return Err(Error::Data(format!(
                    "{}: label byte {} exceeds 9",
                    path.as_ref().display(),
                    label
                )));
            }
            labels.push(label as usize);
            // channel-major planes preserved as-is
            pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let n = labels.len();
    LabeledDataset::new(Tensor::new(vec![n, 3, 32, 32], pixels)?, labels, 10, split)
}
