//! SGD with classical momentum: v ← momentum·v + g, w ← w − lr·v.
//! Velocity state lives in the optimizer and persists across steps.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Gradients, Network};

#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<Vec<Option<(Tensor, Tensor)>>>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        SgdMomentum {
            learning_rate,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.per_layer.len() != net.layers().len() {
            return Err(Error::Internal(
                "gradients do not align with network layers".into(),
            ));
        }
        let velocity = self.velocity.get_or_insert_with(|| {
            grads
                .per_layer
                .iter()
                .map(|g| {
                    g.as_ref().map(|pg| {
                        (
                            Tensor::zeros(pg.weight.shape().to_vec()),
                            Tensor::zeros(pg.bias.shape().to_vec()),
                        )
                    })
                })
                .collect()
        });
        for ((layer, grad), vel) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.per_layer)
            .zip(velocity.iter_mut())
        {
            let (Some((weight, bias)), Some(grad), Some((vw, vb))) =
                (layer.params_mut(), grad.as_ref(), vel.as_mut())
            else {
                continue;
            };
            if weight.shape() != grad.weight.shape() || bias.shape() != grad.bias.shape() {
                return Err(Error::Internal("gradient shape mismatch in sgd step".into()));
            }
            update(weight, &grad.weight, vw, self.learning_rate, self.momentum);
            update(bias, &grad.bias, vb, self.learning_rate, self.momentum);
        }
        Ok(())
    }
}

fn update(param: &mut Tensor, grad: &Tensor, vel: &mut Tensor, lr: f64, momentum: f64) {
    for ((p, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(vel.data_mut())
    {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}
