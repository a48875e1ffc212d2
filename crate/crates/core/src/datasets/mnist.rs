//! MNIST IDX files: big-endian headers, magic 2051 (0x803) for images and
//! 2049 (0x801) for labels, one byte per pixel/label.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
) -> Result<LabeledDataset> {
    let (images, rows, cols, n_images) = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path)?)?;
    if labels.len() != n_images {
        return Err(Error::Data(format!(
            "image file holds {} images but label file holds {} labels",
            n_images,
            labels.len()
        )));
    }
    LabeledDataset::new(
        Tensor::new(vec![n_images, 1, rows, cols], images)?,
        labels,
        10,
        split,
    )
}

fn parse_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize, usize)> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Data("image file too short for IDX header".into()))?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Data(format!(
            "bad image magic: expected {}, found {}",
            IMAGE_MAGIC, magic
        )));
    }
    let n = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;
    let expected = n * rows * cols;
    let pixels = &bytes[16..];
    if pixels.len() != expected {
        return Err(Error::Data(format!(
            "image payload holds {} bytes, header implies {}",
            pixels.len(),
            expected
        )));
    }
    Ok((
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
        rows,
        cols,
        n,
    ))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Data("label file too short for IDX header".into()))?;
    if magic != LABEL_MAGIC {
        return Err(Error::Data(format!(
            "bad label magic: expected {}, found {}",
            LABEL_MAGIC, magic
        )));
    }
    let n = cur.read_u32::<BigEndian>()? as usize;
    let labels = &bytes[8..];
    if labels.len() != n {
        return Err(Error::Data(format!(
            "label payload holds {} bytes, header implies {}",
            labels.len(),
            n
        )));
    }
    Ok(labels.iter().map(|&b| b as usize).collect())
}

/// Write a dataset back out in IDX layout. Pixels are quantized to bytes by
/// rounding v*255; datasets whose pixels sit on the 1/255 grid (anything a
/// loader produced) round-trip bitwise.
pub fn write_mnist_idx(
    dataset: &LabeledDataset,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let (c, h, w) = dataset.image_shape();
    if c != 1 {
        return Err(Error::InvalidArgument(format!(
            "IDX image files are single-channel, dataset has {} channels",
            c
        )));
    }
    let mut img = Vec::with_capacity(16 + dataset.len() * h * w);
    img.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    img.write_u32::<BigEndian>(dataset.len() as u32)?;
    img.write_u32::<BigEndian>(h as u32)?;
    img.write_u32::<BigEndian>(w as u32)?;
    for &v in dataset.images.data() {
        img.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    fs::write(images_path, img)?;

    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.write_u32::<BigEndian>(LABEL_MAGIC)?;
    lab.write_u32::<BigEndian>(dataset.len() as u32)?;
    for &l in &dataset.labels {
        lab.push(l as u8);
    }
    fs::write(labels_path, lab)?;
    Ok(())
}
