//! Inverted dropout.
//!
//! `p` is the drop probability. In `Train` and `MCSample` modes each element
//! is zeroed independently with probability `p` and survivors are scaled by
//! 1/(1-p), so `Eval` mode is the identity with no rescaling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::ExecutionMode;
use crate::tensor::Tensor;

/// Apply dropout, returning the output and the mask actually used. Mask
/// entries are 0 for dropped elements and 1/(1-p) for kept ones; backward
/// multiplies by the same mask.
pub fn forward(
    x: &Tensor,
    p: f64,
    mode: ExecutionMode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {}",
            p
        )));
    }
    if mode == ExecutionMode::Eval {
        return Ok((x.clone(), Tensor::filled(x.shape().to_vec(), 1.0)));
    }
    let rng = rng.ok_or_else(|| {
        Error::InvalidArgument("dropout sampling requires an rng outside Eval mode".into())
    })?;
    let scale = 1.0 / (1.0 - p);
    let mut y = x.clone();
    let mut mask = Tensor::zeros(x.shape().to_vec());
    for (out, m) in y.data_mut().iter_mut().zip(mask.data_mut()) {
        if rng.random::<f64>() < p {
            *out = 0.0;
        } else {
            *out *= scale;
            *m = scale;
        }
    }
    Ok((y, mask))
}
