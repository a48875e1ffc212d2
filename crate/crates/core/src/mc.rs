//! K-pass Monte Carlo inference.
//!
//! Each pass runs the network in MCSample mode with its own pre-derived
//! seed (`derive_indexed(seed, "pass", k)`), softmax is applied per pass,
//! and the passes are summarized into the four uncertainty statistics:
//! expected value (mean probabilities), standard deviation, variation
//! ratio, and predictive entropy. Probabilities are averaged, not logits,
//! so the mean stays a simplex point. Standard deviations are population
//! (divide by K): the K passes are the whole ensemble.

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{loss, ExecutionMode, Network};
use crate::parallel::{self, GRAD_PARTITIONS};
use crate::seed;
use crate::tensor::Tensor;
use crate::train::argmax;

/// Summary of K stochastic forward passes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub mean_probs: Vec<f64>,
    pub std_probs: Vec<f64>,
    /// 1 - (modal argmax count) / K.
    pub variation_ratio: f64,
    /// Shannon entropy of mean_probs (natural log).
    pub entropy: f64,
    pub k: usize,
    pub per_pass_argmax: Vec<usize>,
}

/// Shannon entropy with the 0·ln0 := 0 convention.
pub fn predictive_entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Collapse per-pass probability vectors into a PredictiveDistribution.
/// When every pass is bitwise identical the mean is the first pass as-is,
/// so a dropout-free "MC" run equals the deterministic forward exactly.
pub fn summarize_passes(passes: &[Vec<f64>]) -> Result<PredictiveDistribution> {
    let k = passes.len();
    let first = passes
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least 1 MC pass".into()))?;
    let c = first.len();
    if passes.iter().any(|p| p.len() != c) {
        return Err(Error::InvalidArgument(
            "MC passes disagree on class count".into(),
        ));
    }

    let per_pass_argmax: Vec<usize> = passes.iter().map(|p| argmax(p)).collect();
    let mut counts = vec![0usize; c];
    for &a in &per_pass_argmax {
        counts[a] += 1;
    }
    let modal = counts.iter().copied().max().unwrap_or(0);
    let variation_ratio = 1.0 - modal as f64 / k as f64;

    let identical = passes[1..].iter().all(|p| p == first);
    let (mean_probs, std_probs) = if identical {
        (first.clone(), vec![0.0; c])
    } else {
        let mut mean = vec![0.0; c];
        for pass in passes {
            for (m, &p) in mean.iter_mut().zip(pass) {
                *m += p;
            }
        }
        for m in &mut mean {
            *m /= k as f64;
        }
        let mut var = vec![0.0; c];
        for pass in passes {
            for ((v, &p), &m) in var.iter_mut().zip(pass).zip(&mean) {
                *v += (p - m) * (p - m);
            }
        }
        let std = var.into_iter().map(|v| (v / k as f64).sqrt()).collect();
        (mean, std)
    };

    let entropy = predictive_entropy(&mean_probs);
    Ok(PredictiveDistribution {
        mean_probs,
        std_probs,
        variation_ratio,
        entropy,
        k,
        per_pass_argmax,
    })
}

/// K seeded MCSample passes over one unbatched sample.
pub fn mc_predict(
    net: &Network,
    x: &Tensor,
    k: usize,
    mc_seed: u64,
) -> Result<PredictiveDistribution> {
    if k < 1 {
        return Err(Error::InvalidArgument("mc passes must be at least 1".into()));
    }
    let mut sample_net = net.clone();
    sample_net.set_mode(ExecutionMode::MCSample);
    let passes = run_passes(&sample_net, x, k, mc_seed)?;
    summarize_passes(&passes)
}

fn run_passes(sample_net: &Network, x: &Tensor, k: usize, mc_seed: u64) -> Result<Vec<Vec<f64>>> {
    // a dropout-free net makes every pass identical; one pass is exact
    let passes_needed = if sample_net.has_dropout() { k } else { 1 };
    let mut passes = Vec::with_capacity(k);
    for pass in 0..passes_needed {
        let mut rng = seed::rng(seed::derive_indexed(mc_seed, "pass", pass as u64));
        let (logits, _) = sample_net.forward_single(x, Some(&mut rng))?;
        passes.push(loss::softmax(logits.data()));
    }
    while passes.len() < k {
        passes.push(passes[0].clone());
    }
    Ok(passes)
}

/// Per-sample predictive distributions over a whole dataset, parallelized
/// over samples with pre-derived per-sample seeds and merged in index order.
pub fn mc_predict_dataset(
    net: &Network,
    data: &LabeledDataset,
    k: usize,
    mc_seed: u64,
) -> Result<Vec<PredictiveDistribution>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset for MC inference".into()));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("mc passes must be at least 1".into()));
    }
    let mut sample_net = net.clone();
    sample_net.set_mode(ExecutionMode::MCSample);
    let net_ref = &sample_net;
    let ranges = parallel::partition_ranges(data.len(), GRAD_PARTITIONS);
    let parts = parallel::run_partitioned(&ranges, |_, range| {
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            let x = data.image(i);
            let sample_seed = seed::derive_indexed(mc_seed, "sample", i as u64);
            let passes = run_passes(net_ref, &x, k, sample_seed)?;
            out.push(summarize_passes(&passes)?);
        }
        Ok::<Vec<PredictiveDistribution>, Error>(out)
    });
    let mut all = Vec::with_capacity(data.len());
    for part in parts {
        all.extend(part?);
    }
    Ok(all)
}

/// Clean-test accuracy of the MC-averaged prediction argmax(mean_probs).
pub fn mc_classify(net: &Network, data: &LabeledDataset, k: usize, mc_seed: u64) -> Result<f64> {
    let predictions = mc_predict_dataset(net, data, k, mc_seed)?;
    let correct = predictions
        .iter()
        .zip(&data.labels)
        .filter(|(p, &label)| argmax(&p.mean_probs) == label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Per-sample uncertainty dump: sample index, argmax, variation ratio,
/// entropy, max mean probability.
pub fn uncertainty_csv(predictions: &[PredictiveDistribution]) -> String {
    let mut out = String::from("sample,argmax,variation_ratio,entropy,max_mean_prob\n");
    for (i, p) in predictions.iter().enumerate() {
        let am = argmax(&p.mean_probs);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i, am, p.variation_ratio, p.entropy, p.mean_probs[am]
        ));
    }
    out
}
