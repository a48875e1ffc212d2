//! Minimal neural-network engine: a fixed layer vocabulary with exact
//! manual backpropagation.
//!
//! A [`Network`] is an ordered list of [`Layer`]s plus an [`ExecutionMode`].
//! `forward` returns the output together with a [`ForwardCache`] holding
//! every layer's output (the dissection module reads post-ReLU activations
//! from it) and the per-layer state backward needs (dropout masks, pool
//! argmax indices). `backward` replays the cache exactly, so the masks used
//! in the forward pass are the masks used in the backward pass.

pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod init;
pub mod loss;
pub mod optim;
pub mod pool;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use conv::Conv2d;
pub use dense::Dense;
pub use optim::SgdMomentum;

/// How dropout behaves: samples masks in `Train` and `MCSample`, identity in
/// `Eval`. Eval-mode forward is a deterministic pure function of input and
/// weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Train,
    Eval,
    MCSample,
}

/// One layer of the fixed vocabulary.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    ReLU,
    MaxPool2d { window: usize },
    Flatten,
    Dropout { rate: f64 },
}

/// Per-layer state captured during forward that backward must reuse.
#[derive(Debug, Clone)]
pub enum Aux {
    None,
    /// Flat input index of the max element for every pooled output element.
    Pool(Vec<usize>),
    /// Dropout mask holding 0 for dropped elements and 1/(1-p) for kept.
    Dropout(Tensor),
}

/// Everything a forward pass produced: the input, every layer's output in
/// order, and the auxiliary state needed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
    pub aux: Vec<Aux>,
}

impl ForwardCache {
    /// Final network output (the logits for classifier nets).
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("cache from empty network")
    }
}

/// Weight/bias gradients for one parameterized layer.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients aligned with the network's layer list; `None` for layers
/// without parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<Option<ParamGrads>>,
}

impl Gradients {
    /// Elementwise sum, used to merge batch partitions in fixed order.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.per_layer.len() != other.per_layer.len() {
            return Err(Error::Internal("gradient layer count mismatch".into()));
        }
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            match (a, b) {
                (Some(ga), Some(gb)) => {
                    for (x, y) in ga.weight.data_mut().iter_mut().zip(gb.weight.data()) {
                        *x += y;
                    }
                    for (x, y) in ga.bias.data_mut().iter_mut().zip(gb.bias.data()) {
                        *x += y;
                    }
                }
                (None, None) => {}
                _ => return Err(Error::Internal("gradient structure mismatch".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    mode: ExecutionMode,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network {
            layers,
            mode: ExecutionMode::Eval,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ExecutionMode) {
        self.mode = mode;
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout { .. }))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Batched forward pass. `rng` is required iff the mode samples dropout
    /// masks and the network contains a dropout layer.
    pub fn forward(
        &self,
        x: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, ForwardCache)> {
        if self.mode != ExecutionMode::Eval && self.has_dropout() && rng.is_none() {
            return Err(Error::InvalidArgument(
                "rng required: network has dropout layers and mode samples masks".into(),
            ));
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let (y, a) = layer.forward(idx, &current, self.mode, rng.as_deref_mut())?;
            outputs.push(y.clone());
            aux.push(a);
            current = y;
        }
        Ok((
            current,
            ForwardCache {
                input: x.clone(),
                outputs,
                aux,
            },
        ))
    }

    /// Forward a single unbatched sample: a leading batch dimension of 1 is
    /// added, and stripped from the output.
    pub fn forward_single(
        &self,
        x: &Tensor,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, ForwardCache)> {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        let lifted = x.clone().reshape(shape)?;
        let (out, cache) = self.forward(&lifted, rng)?;
        let squeezed = out
            .clone()
            .reshape(out.shape()[1..].to_vec())
            .expect("squeeze batch dim");
        Ok((squeezed, cache))
    }

    /// Backpropagate `loss_grad` (gradient of the loss w.r.t. the network
    /// output) through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Gradients> {
        if cache.outputs.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "cache has {} layer outputs but network has {} layers",
                cache.outputs.len(),
                self.layers.len()
            )));
        }
        if loss_grad.shape() != cache.output().shape() {
            return Err(Error::InvalidArgument(format!(
                "loss gradient shape {:?} does not match output shape {:?}",
                loss_grad.shape(),
                cache.output().shape()
            )));
        }
        let mut per_layer = vec![None; self.layers.len()];
        let mut dout = loss_grad.clone();
        for idx in (0..self.layers.len()).rev() {
            let input = if idx == 0 {
                &cache.input
            } else {
                &cache.outputs[idx - 1]
            };
            let (dx, grads) = self.layers[idx].backward(
                idx,
                input,
                &cache.outputs[idx],
                &cache.aux[idx],
                &dout,
            )?;
            per_layer[idx] = grads;
            dout = dx;
        }
        Ok(Gradients { per_layer })
    }
}

impl Layer {
    /// Parameter tensors (weight, bias) if the layer has any.
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Shape math without running data; used to build and validate nets.
    pub fn output_shape(&self, idx: usize, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => c.output_shape(idx, input),
            Layer::Dense(d) => d.output_shape(idx, input),
            Layer::ReLU | Layer::Dropout { .. } => Ok(input.to_vec()),
            Layer::MaxPool2d { window } => pool::output_shape(idx, input, *window),
            Layer::Flatten => {
                if input.len() < 2 {
                    return Err(Error::shape(
                        idx,
                        format!("flatten expects a batched input, got shape {:?}", input),
                    ));
                }
                Ok(vec![input[0], input[1..].iter().product()])
            }
        }
    }

    fn forward(
        &self,
        idx: usize,
        x: &Tensor,
        mode: ExecutionMode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Aux)> {
        match self {
            Layer::Conv2d(c) => Ok((c.forward(idx, x)?, Aux::None)),
            Layer::Dense(d) => Ok((d.forward(idx, x)?, Aux::None)),
            Layer::ReLU => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                Ok((y, Aux::None))
            }
            Layer::MaxPool2d { window } => {
                let (y, argmax) = pool::forward(idx, x, *window)?;
                Ok((y, Aux::Pool(argmax)))
            }
            Layer::Flatten => {
                let out_shape = self.output_shape(idx, x.shape())?;
                Ok((x.clone().reshape(out_shape)?, Aux::None))
            }
            Layer::Dropout { rate } => {
                let (y, mask) = dropout::forward(x, *rate, mode, rng)?;
                Ok((y, Aux::Dropout(mask)))
            }
        }
    }

    fn backward(
        &self,
        idx: usize,
        input: &Tensor,
        output: &Tensor,
        aux: &Aux,
        dout: &Tensor,
    ) -> Result<(Tensor, Option<ParamGrads>)> {
        if dout.shape() != output.shape() {
            return Err(Error::shape(
                idx,
                format!(
                    "upstream gradient shape {:?} does not match layer output {:?}",
                    dout.shape(),
                    output.shape()
                ),
            ));
        }
        match self {
            Layer::Conv2d(c) => {
                let (dx, grads) = c.backward(input, dout);
                Ok((dx, Some(grads)))
            }
            Layer::Dense(d) => {
                let (dx, grads) = d.backward(input, dout);
                Ok((dx, Some(grads)))
            }
            Layer::ReLU => {
                let mut dx = dout.clone();
                for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok((dx, None))
            }
            Layer::MaxPool2d { .. } => {
                let Aux::Pool(argmax) = aux else {
                    return Err(Error::Internal("pool layer lost its argmax cache".into()));
                };
                let mut dx = Tensor::zeros(input.shape().to_vec());
                for (o, &src) in argmax.iter().enumerate() {
                    dx.data_mut()[src] += dout.data()[o];
                }
                Ok((dx, None))
            }
            Layer::Flatten => Ok((dout.clone().reshape(input.shape().to_vec())?, None)),
            Layer::Dropout { .. } => {
                let Aux::Dropout(mask) = aux else {
                    return Err(Error::Internal("dropout layer lost its mask".into()));
                };
                let mut dx = dout.clone();
                for (g, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
                    *g *= m;
                }
                Ok((dx, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn identity_dense(n: usize) -> Dense {
        let mut weight = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            weight.data_mut()[i * n + i] = 1.0;
        }
        Dense {
            in_features: n,
            out_features: n,
            weight,
            bias: Tensor::zeros(vec![n]),
        }
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let net = Network::new(vec![Layer::Dense(identity_dense(3))]);
        let x = Tensor::vector(&[1.0, 2.0, 3.0]);
        let (y, _) = net.forward_single(&x, None).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = Network::new(vec![Layer::ReLU]);
        let x = Tensor::vector(&[-1.0, 0.0, 2.0]);
        let (y, _) = net.forward_single(&x, None).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let mut net = Network::new(vec![
            Layer::Dense(Dense::new(4, 3)),
            Layer::ReLU,
            Layer::Dense(Dense::new(3, 2)),
        ]);
        init::init_network(&mut net, seed::derive(9, "init"));
        let x = Tensor::new(vec![2, 4], (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let (a, _) = net.forward(&x, None).unwrap();
        let (b, _) = net.forward(&x, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_loss_grad_gives_zero_param_grads() {
        let mut net = Network::new(vec![
            Layer::Dense(Dense::new(4, 3)),
            Layer::ReLU,
            Layer::Dense(Dense::new(3, 2)),
        ]);
        init::init_network(&mut net, seed::derive(4, "init"));
        let x = Tensor::new(vec![1, 4], vec![0.5, -0.25, 1.0, 2.0]).unwrap();
        let (y, cache) = net.forward(&x, None).unwrap();
        let grads = net
            .backward(&cache, &Tensor::zeros(y.shape().to_vec()))
            .unwrap();
        for g in grads.per_layer.iter().flatten() {
            assert!(g.weight.data().iter().all(|&v| v == 0.0));
            assert!(g.bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_dense_weight_grad_is_input() {
        // Dense 1->1 with loss L = w*x: dL/dw = x.
        let net = Network::new(vec![Layer::Dense(Dense {
            in_features: 1,
            out_features: 1,
            weight: Tensor::new(vec![1, 1], vec![1.7]).unwrap(),
            bias: Tensor::zeros(vec![1]),
        })]);
        let x = Tensor::new(vec![1, 1], vec![3.25]).unwrap();
        let (_, cache) = net.forward(&x, None).unwrap();
        let grads = net
            .backward(&cache, &Tensor::new(vec![1, 1], vec![1.0]).unwrap())
            .unwrap();
        let g = grads.per_layer[0].as_ref().unwrap();
        assert_eq!(g.weight.data(), &[3.25]);
        assert_eq!(g.bias.data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let net_a = Network::new(vec![Layer::Dense(Dense::new(2, 2)), Layer::ReLU]);
        let net_b = Network::new(vec![Layer::Dense(Dense::new(2, 2))]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let (y, cache) = net_a.forward(&x, None).unwrap();
        let err = net_b.backward(&cache, &Tensor::zeros(y.shape().to_vec()));
        assert!(err.is_err());
    }

    #[test]
    fn forward_names_offending_layer_on_shape_mismatch() {
        let net = Network::new(vec![Layer::ReLU, Layer::Dense(Dense::new(5, 2))]);
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        match net.forward(&x, None) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected shape error, got {:?}", other),
        }
    }

    #[test]
    fn dropout_without_rng_is_rejected_outside_eval() {
        let mut net = Network::new(vec![Layer::Dropout { rate: 0.5 }]);
        net.set_mode(ExecutionMode::Train);
        let x = Tensor::vector(&[1.0, 2.0]);
        assert!(matches!(
            net.forward_single(&x, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dropout_backward_reuses_forward_mask() {
        let mut net = Network::new(vec![Layer::Dropout { rate: 0.5 }]);
        net.set_mode(ExecutionMode::Train);
        let x = Tensor::new(vec![1, 64], vec![1.0; 64]).unwrap();
        let mut rng = seed::rng(33);
        let (y, cache) = net.forward(&x, Some(&mut rng)).unwrap();
        let ones = Tensor::filled(y.shape().to_vec(), 1.0);
        let _ = &ones;
        let grads_in = net.backward(&cache, &ones).unwrap();
        let _ = grads_in;
        // gradient is zero exactly where the forward output was dropped
        let (dx, _) = net.layers()[0]
            .backward(0, &x, &cache.outputs[0], &cache.aux[0], &ones)
            .unwrap();
        for (g, &out) in dx.data().iter().zip(y.data()) {
            if out == 0.0 {
                assert_eq!(*g, 0.0);
            } else {
                assert_eq!(*g, 2.0); // 1/(1-0.5)
            }
        }
    }
}
