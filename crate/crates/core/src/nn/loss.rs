//! Softmax cross-entropy, numerically stabilized by max subtraction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stable softmax of a logit slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-sample loss and gradient: loss = −ln softmax(logits)[label],
/// grad = softmax(logits) − one_hot(label).
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected a logit vector, got shape {:?}",
            logits.shape()
        )));
    }
    let c = logits.len();
    if label >= c {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {} classes",
            label, c
        )));
    }
    let ld = logits.data();
    let max = ld.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = ld.iter().map(|&l| (l - max).exp()).sum();
    let loss = max + sum_exp.ln() - ld[label];
    let mut grad = softmax(ld);
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(vec![c], grad)?))
}

/// Sum of per-row losses with unscaled per-row gradients. Batch partitions
/// accumulate these and apply the 1/n factor once, so the merge order of
/// the mean is fixed.
pub fn sum_softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "logits shape {:?} does not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let n = labels.len();
    let c = logits.shape()[1];
    let mut total = 0.0;
    let mut grad = Tensor::zeros(vec![n, c]);
    for (b, &label) in labels.iter().enumerate() {
        let row = Tensor::new(vec![c], logits.data()[b * c..(b + 1) * c].to_vec())?;
        let (loss, g) = softmax_cross_entropy(&row, label)?;
        total += loss;
        grad.data_mut()[b * c..(b + 1) * c].copy_from_slice(g.data());
    }
    Ok((total, grad))
}

/// Mean loss over a batch of logits with the gradient of the mean: each
/// row's softmax-minus-onehot scaled by 1/n.
pub fn batched_softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = labels.len();
    let (total, mut grad) = sum_softmax_cross_entropy(logits, labels)?;
    let scale = 1.0 / n as f64;
    for g in grad.data_mut() {
        *g *= scale;
    }
    Ok((total * scale, grad))
}
