//! Core engine for studying how Monte Carlo dropout networks behave when
//! trained on corrupted labels.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`tensor`] / [`nn`] — flat `f64` tensors and a fixed layer vocabulary
//!   (conv, dense, ReLU, max-pool, flatten, dropout) with exact manual
//!   backpropagation and SGD.
//! - [`datasets`] — MNIST IDX and CIFAR-10 binary loaders plus a seeded
//!   synthetic generator for fast tests.
//! - [`noise`] — label-corruption transition matrices and seeded corruption
//!   of training labels.
//! - [`models`] — the LeNet5 and ConvNet architectures with a configurable
//!   dropout placement mask.
//! - [`train`] — seeded experiment runner producing per-epoch logs.
//! - [`mc`] — K-pass Monte Carlo inference and its uncertainty statistics.
//! - [`dissect`] — per-neuron activation gamuts, layer volatility/sparsity
//!   statistics, histograms, and heatmap exports.
//! - [`config`] — strict experiment configuration files.

pub mod config;
pub mod datasets;
pub mod dissect;
pub mod error;
pub mod mc;
pub mod models;
pub mod nn;
pub mod noise;
pub mod parallel;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
