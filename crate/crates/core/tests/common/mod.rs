//! Shared test oracles: finite-difference gradient checking against the
//! analytic backward pass, with dropout masks pinned by reseeding.

use droplab_core::nn::{loss, Conv2d, Dense, ExecutionMode, Layer, Network};
use droplab_core::seed;
use droplab_core::Tensor;
use rand::Rng;

/// Mean cross-entropy of a Train-mode forward with dropout masks drawn from
/// `mask_seed`. Reseeding per call keeps the loss a deterministic function
/// of the parameters, which central differences require.
pub fn seeded_loss(net: &Network, x: &Tensor, labels: &[usize], mask_seed: u64) -> f64 {
    let mut rng = seed::rng(mask_seed);
    let (logits, _) = net.forward(x, Some(&mut rng)).expect("forward");
    let (l, _) = loss::batched_softmax_cross_entropy(&logits, labels).expect("loss");
    l
}

/// Analytic parameter gradients for the same seeded loss.
pub fn seeded_grads(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    mask_seed: u64,
) -> droplab_core::nn::Gradients {
    let mut rng = seed::rng(mask_seed);
    let (logits, cache) = net.forward(x, Some(&mut rng)).expect("forward");
    let (_, grad) = loss::batched_softmax_cross_entropy(&logits, labels).expect("loss");
    net.backward(&cache, &grad).expect("backward")
}

/// Check every parameter gradient against central finite differences.
/// Returns (parameters checked, worst relative error). The relative error
/// uses a 1e-5 magnitude floor so near-zero gradients are compared
/// absolutely at ~1e-9.
pub fn gradient_check(
    net: &mut Network,
    x: &Tensor,
    labels: &[usize],
    mask_seed: u64,
    h: f64,
) -> (usize, f64) {
    let analytic = seeded_grads(net, x, labels, mask_seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for layer_idx in 0..net.layers().len() {
        let Some(pg) = analytic.per_layer[layer_idx].as_ref() else {
            continue;
        };
        let param_lens = [pg.weight.len(), pg.bias.len()];
        for (which, &len) in param_lens.iter().enumerate() {
            for i in 0..len {
                let orig = {
                    let (w, b) = net.layers_mut()[layer_idx].params_mut().unwrap();
                    let slot = if which == 0 { w } else { b };
                    let v = slot.data()[i];
                    slot.data_mut()[i] = v + h;
                    v
                };
                let loss_plus = seeded_loss(net, x, labels, mask_seed);
                {
                    let (w, b) = net.layers_mut()[layer_idx].params_mut().unwrap();
                    let slot = if which == 0 { w } else { b };
                    slot.data_mut()[i] = orig - h;
                }
                let loss_minus = seeded_loss(net, x, labels, mask_seed);
                {
                    let (w, b) = net.layers_mut()[layer_idx].params_mut().unwrap();
                    let slot = if which == 0 { w } else { b };
                    slot.data_mut()[i] = orig;
                }
                let numeric = (loss_plus - loss_minus) / (2.0 * h);
                let a = if which == 0 {
                    pg.weight.data()[i]
                } else {
                    pg.bias.data()[i]
                };
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    (checked, worst)
}

/// A small seeded network zoo covering the full layer vocabulary; every net
/// stays under 200 parameters.
pub fn small_net(variant: usize) -> (Network, Vec<usize>) {
    match variant % 10 {
        0 => (
            Network::new(vec![Layer::Dense(Dense::new(4, 5))]),
            vec![4],
        ),
        1 => (
            Network::new(vec![
                Layer::Dense(Dense::new(6, 4)),
                Layer::ReLU,
                Layer::Dense(Dense::new(4, 3)),
            ]),
            vec![6],
        ),
        2 => (
            Network::new(vec![
                Layer::Dense(Dense::new(5, 4)),
                Layer::ReLU,
                Layer::Dropout { rate: 0.5 },
                Layer::Dense(Dense::new(4, 3)),
            ]),
            vec![5],
        ),
        3 => (
            Network::new(vec![
                Layer::Conv2d(Conv2d::new(1, 2, 3, 1, 0)),
                Layer::ReLU,
                Layer::Flatten,
                Layer::Dense(Dense::new(2 * 4 * 4, 3)),
            ]),
            vec![1, 6, 6],
        ),
        4 => (
            Network::new(vec![
                Layer::Conv2d(Conv2d::new(1, 2, 3, 1, 1)),
                Layer::ReLU,
                Layer::MaxPool2d { window: 2 },
                Layer::Flatten,
                Layer::Dense(Dense::new(2 * 3 * 3, 4)),
            ]),
            vec![1, 6, 6],
        ),
        5 => (
            Network::new(vec![
                Layer::Conv2d(Conv2d::new(2, 3, 3, 2, 1)),
                Layer::ReLU,
                Layer::Flatten,
                Layer::Dense(Dense::new(3 * 3 * 3, 2)),
            ]),
            vec![2, 5, 5],
        ),
        6 => (
            Network::new(vec![
                Layer::Conv2d(Conv2d::new(1, 2, 3, 1, 0)),
                Layer::ReLU,
                Layer::Dropout { rate: 0.25 },
                Layer::MaxPool2d { window: 2 },
                Layer::Flatten,
                Layer::Dense(Dense::new(2 * 2 * 2, 3)),
            ]),
            vec![1, 6, 6],
        ),
        7 => (
            Network::new(vec![
                Layer::Dense(Dense::new(8, 6)),
                Layer::ReLU,
                Layer::Dropout { rate: 0.4 },
                Layer::Dense(Dense::new(6, 4)),
                Layer::ReLU,
                Layer::Dense(Dense::new(4, 2)),
            ]),
            vec![8],
        ),
        8 => (
            Network::new(vec![
                Layer::Conv2d(Conv2d::new(1, 1, 2, 1, 0)),
                Layer::ReLU,
                Layer::Conv2d(Conv2d::new(1, 2, 2, 1, 0)),
                Layer::ReLU,
                Layer::Flatten,
                Layer::Dense(Dense::new(2 * 3 * 3, 3)),
            ]),
            vec![1, 5, 5],
        ),
        _ => (
            Network::new(vec![
                Layer::Flatten,
                Layer::Dropout { rate: 0.1 },
                Layer::Dense(Dense::new(9, 5)),
                Layer::ReLU,
                Layer::Dense(Dense::new(5, 4)),
            ]),
            vec![1, 3, 3],
        ),
    }
}

/// Seeded batch of inputs and labels for a given input shape and class
/// count inferred from the net's final dense layer.
pub fn seeded_batch(
    net: &Network,
    input_shape: &[usize],
    batch: usize,
    data_seed: u64,
) -> (Tensor, Vec<usize>) {
    let classes = net
        .layers()
        .iter()
        .rev()
        .find_map(|l| match l {
            Layer::Dense(d) => Some(d.out_features),
            _ => None,
        })
        .expect("net has a dense output");
    let mut shape = vec![batch];
    shape.extend_from_slice(input_shape);
    let numel: usize = shape.iter().product();
    let mut rng = seed::rng(data_seed);
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    (Tensor::new(shape, data).unwrap(), labels)
}

/// Build, initialize, and set up a train-mode instance of net `variant`.
/// Biases get small random values: with zero biases an all-zero upstream
/// ReLU window parks a pre-activation exactly on the ReLU kink, where
/// central differences are invalid.
pub fn prepared_net(variant: usize) -> (Network, Tensor, Vec<usize>) {
    let (mut net, input_shape) = small_net(variant);
    droplab_core::nn::init::init_network(&mut net, seed::derive(1000 + variant as u64, "init"));
    let mut rng = seed::rng(seed::derive(2000 + variant as u64, "bias-jitter"));
    for layer in net.layers_mut() {
        if let Some((_, bias)) = layer.params_mut() {
            for b in bias.data_mut() {
                *b = rng.random_range(-0.2..0.2);
            }
        }
    }
    net.set_mode(ExecutionMode::Train);
    let (x, labels) = seeded_batch(&net, &input_shape, 2, seed::derive(variant as u64, "data"));
    (net, x, labels)
}
