//! Flat row-major `f64` tensors.
//!
//! Carrier for images, feature maps, weights, and gradients. Layers index
//! the flat data directly; `Tensor` only guarantees the shape/data-length
//! invariant and provides a few conveniences.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build from an explicit shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} implies {} elements but data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} has a zero dimension",
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    /// 1-D tensor from a slice; handy in tests.
    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot reshape {} elements into {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major offset of a 4-D index; used by conv/pool code.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }
}

/// Elementwise mean of several same-shaped tensors.
///
/// When every input is bitwise identical the first one is returned as-is, so
/// averaging K identical stochastic passes stays bitwise equal to a single
/// deterministic pass.
pub fn mean_tensors(tensors: &[Tensor]) -> Result<Tensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean of zero tensors".into()))?;
    for t in &tensors[1..] {
        if t.shape() != first.shape() {
            return Err(Error::InvalidArgument(format!(
                "mean over mismatched shapes {:?} vs {:?}",
                first.shape(),
                t.shape()
            )));
        }
    }
    if tensors[1..].iter().all(|t| t.data() == first.data()) {
        return Ok(first.clone());
    }
    let k = tensors.len() as f64;
    let mut out = vec![0.0; first.len()];
    for t in tensors {
        for (o, v) in out.iter_mut().zip(t.data()) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= k;
    }
    Tensor::new(first.shape().to_vec(), out)
}
