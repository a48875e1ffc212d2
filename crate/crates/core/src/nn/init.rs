//! Seeded Glorot-uniform weight initialization.
//!
//! Weights are drawn uniformly from ±sqrt(6/(fan_in+fan_out)); biases start
//! at zero. Layers consume the stream in order, and layers without
//! parameters consume nothing, so two placements of the same architecture
//! share identical initial weights under the same seed.

use rand::Rng;

use crate::nn::{Layer, Network};
use crate::seed;

pub fn init_network(net: &mut Network, init_seed: u64) {
    let mut rng = seed::rng(init_seed);
    for layer in net.layers_mut() {
        let (fan_in, fan_out) = match layer {
            Layer::Conv2d(c) => (
                c.in_channels * c.kernel * c.kernel,
                c.out_channels * c.kernel * c.kernel,
            ),
            Layer::Dense(d) => (d.in_features, d.out_features),
            _ => continue,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        if let Some((weight, bias)) = layer.params_mut() {
            for w in weight.data_mut() {
                *w = rng.random_range(-limit..limit);
            }
            bias.data_mut().fill(0.0);
        }
    }
}
