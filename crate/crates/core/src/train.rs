//! Seeded experiment runner: trains certainty and MC-dropout models on
//! corrupted labels and logs per-epoch train accuracy (against the noisy
//! labels the model actually sees) and clean-test accuracy.
//!
//! All randomness derives from the experiment seed: child seeds are
//! `derive(seed, role)` for roles `init`, `corruption`, `dropout`, `mc`,
//! and `shuffle-epoch-<k>`; dropout streams fan out per batch and batch
//! partition. Changing the seed never changes dataset contents.

use std::path::PathBuf;

use rand::seq::SliceRandom;

use crate::datasets::{self, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::mc;
use crate::models::{build_model_for_input, Arch, ArchSpec, DropoutPlacement};
use crate::nn::{loss, ExecutionMode, Gradients, Network, SgdMomentum};
use crate::noise::{self, CorruptionRecord};
use crate::parallel::{self, GRAD_PARTITIONS};
use crate::seed;
use crate::tensor::Tensor;

/// Where the experiment's data comes from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    MnistIdx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Cifar10 {
        train_batches: Vec<PathBuf>,
        test_batches: Vec<PathBuf>,
    },
    Synthetic {
        n_train: usize,
        n_test: usize,
        classes: usize,
        shape: (usize, usize, usize),
        /// Independent of the experiment seed, so reseeding an experiment
        /// never changes the data.
        data_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseScheme {
    /// Exactly floor(rate*n) labels flipped uniformly (the experiment
    /// protocol).
    Exact,
    /// Independent per-label resampling through a transition matrix.
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetric,
    /// Cyclic class flips k -> (k+1) mod c.
    Asymmetric,
}

/// How the unresponsive-neuron threshold is resolved at dissection time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    /// epsilon = factor * (model-wide mean of |gamut means|).
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub source: DatasetSource,
    pub noise_rate: f64,
    pub noise_scheme: NoiseScheme,
    pub noise_kind: NoiseKind,
    pub arch: Arch,
    pub placement: DropoutPlacement,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// MC forward passes for K-pass evaluation.
    pub mc_passes: usize,
    pub epsilon: EpsilonSpec,
    /// Truncate the train set to its first n samples (0 = all).
    pub subset_size: usize,
    /// Truncate the test set to its first n samples (0 = all).
    pub test_subset_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("train.batch must be at least 1".into()));
        }
        if self.mc_passes < 1 {
            return Err(Error::Config("mc.k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise.rate must be in [0, 1), got {}",
                self.noise_rate
            )));
        }
        if self.noise_scheme == NoiseScheme::Exact && self.noise_kind == NoiseKind::Asymmetric {
            return Err(Error::Config(
                "noise.scheme=\"exact\" is the uniform protocol; use scheme=\"matrix\" for asymmetric noise".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Accuracy against the noisy labels the model trains on.
    pub train_accuracy: f64,
    /// Deterministic (Eval-mode) accuracy on clean test labels.
    pub test_accuracy: f64,
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub epoch_logs: Vec<EpochLog>,
    pub network: Network,
    pub corruption: CorruptionRecord,
    /// K-pass MC accuracy on the clean test set (the headline number; equals
    /// the deterministic accuracy for dropout-free models).
    pub final_mc_accuracy: f64,
    pub final_eval_accuracy: f64,
    pub num_classes: usize,
}

/// One full pass over the shuffled training data. Returns (mean loss,
/// train accuracy against the labels passed in). Gradients are accumulated
/// over a fixed number of batch partitions and merged in partition order.
pub fn train_epoch(
    net: &mut Network,
    data: &LabeledDataset,
    labels: &[usize],
    optimizer: &mut SgdMomentum,
    batch_size: usize,
    shuffle_seed: u64,
    dropout_seed: u64,
) -> Result<(f64, f64)> {
    if labels.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            data.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    net.set_mode(ExecutionMode::Train);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(shuffle_seed));

    let mut total_loss = 0.0;
    let mut total_correct = 0usize;
    for (batch_idx, batch) in order.chunks(batch_size).enumerate() {
        let batch_seed = seed::derive_indexed(dropout_seed, "batch", batch_idx as u64);
        let scale = 1.0 / batch.len() as f64;
        let ranges = parallel::partition_ranges(batch.len(), GRAD_PARTITIONS);
        let net_ref: &Network = net;
        let parts = parallel::run_partitioned(&ranges, |part_idx, range| {
            let indices = &batch[range];
            let x = data.batch(indices);
            let part_labels: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            let mut rng = seed::rng(seed::derive_indexed(batch_seed, "part", part_idx as u64));
            let (logits, cache) = net_ref.forward(&x, Some(&mut rng))?;
            let (sum_loss, mut grad) = loss::sum_softmax_cross_entropy(&logits, &part_labels)?;
            for g in grad.data_mut() {
                *g *= scale;
            }
            let grads = net_ref.backward(&cache, &grad)?;
            let correct = count_correct(&logits, &part_labels);
            Ok::<(Gradients, f64, usize), Error>((grads, sum_loss, correct))
        });

        let mut merged: Option<Gradients> = None;
        for part in parts {
            let (grads, sum_loss, correct) = part?;
            total_loss += sum_loss;
            total_correct += correct;
            match &mut merged {
                None => merged = Some(grads),
                Some(m) => m.accumulate(&grads)?,
            }
        }
        let merged = merged.ok_or_else(|| Error::Internal("batch produced no partitions".into()))?;
        optimizer.step(net, &merged)?;
    }

    Ok((
        total_loss / data.len() as f64,
        total_correct as f64 / data.len() as f64,
    ))
}

/// Eval-mode argmax accuracy on clean labels.
pub fn evaluate_deterministic(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut eval_net = net.clone();
    eval_net.set_mode(ExecutionMode::Eval);
    let eval_ref = &eval_net;
    let ranges = parallel::partition_ranges(data.len(), GRAD_PARTITIONS);
    let counts = parallel::run_partitioned(&ranges, |_, range| {
        let mut correct = 0usize;
        for chunk_start in range.clone().step_by(256) {
            let chunk_end = (chunk_start + 256).min(range.end);
            let indices: Vec<usize> = (chunk_start..chunk_end).collect();
            let x = data.batch(&indices);
            let chunk_labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
            let (logits, _) = eval_ref.forward(&x, None)?;
            correct += count_correct(&logits, &chunk_labels);
        }
        Ok::<usize, Error>(correct)
    });
    let mut correct = 0usize;
    for c in counts {
        correct += c?;
    }
    Ok(correct as f64 / data.len() as f64)
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    labels
        .iter()
        .enumerate()
        .filter(|&(row, &label)| argmax(&logits.data()[row * c..(row + 1) * c]) == label)
        .count()
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Load the configured datasets (clean labels). Fails before any training
/// when files are missing or malformed.
pub fn load_datasets(source: &DatasetSource) -> Result<(LabeledDataset, LabeledDataset)> {
    match source {
        DatasetSource::MnistIdx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => Ok((
            datasets::load_mnist_idx(train_images, train_labels, Split::Train)?,
            datasets::load_mnist_idx(test_images, test_labels, Split::Test)?,
        )),
        DatasetSource::Cifar10 {
            train_batches,
            test_batches,
        } => Ok((
            datasets::load_cifar10_binary(train_batches, Split::Train)?,
            datasets::load_cifar10_binary(test_batches, Split::Test)?,
        )),
        DatasetSource::Synthetic {
            n_train,
            n_test,
            classes,
            shape,
            data_seed,
        } => {
            let all = datasets::make_synthetic(n_train + n_test, *classes, *shape, *data_seed)?;
            all.split_at(*n_train)
        }
    }
}

/// The full protocol: load data, corrupt the training labels once, build
/// the seeded model, train for the configured epochs, and evaluate. The
/// result is a pure function of the config.
pub fn run_experiment(config: &TrainConfig) -> Result<ExperimentResult> {
    run_experiment_with_data(config, None)
}

/// As `run_experiment`, but callers that run many configs over the same
/// files can pass preloaded clean datasets to skip re-reading them.
pub fn run_experiment_with_data(
    config: &TrainConfig,
    preloaded: Option<(&LabeledDataset, &LabeledDataset)>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let (train_full, test_full) = match preloaded {
        Some((tr, te)) => (tr.clone(), te.clone()),
        None => load_datasets(&config.source)?,
    };
    let train_data = train_full.take(config.subset_size);
    let test_data = test_full.take(config.test_subset_size);
    if train_data.is_empty() || test_data.is_empty() {
        return Err(Error::Data("empty train or test split".into()));
    }
    let c = train_data.num_classes;

    let corruption_seed = seed::derive(config.seed, "corruption");
    let corruption = match config.noise_scheme {
        NoiseScheme::Exact => {
            noise::corrupt_exact_fraction(&train_data.labels, c, config.noise_rate, corruption_seed)?
        }
        NoiseScheme::Matrix => {
            let matrix = match config.noise_kind {
                NoiseKind::Symmetric => noise::symmetric_matrix(c, config.noise_rate)?,
                NoiseKind::Asymmetric => {
                    let flips: Vec<(usize, usize)> = (0..c).map(|k| (k, (k + 1) % c)).collect();
                    noise::asymmetric_matrix(c, &flips, config.noise_rate)?
                }
            };
            noise::corrupt_by_matrix(&train_data.labels, &matrix, corruption_seed)?
        }
    };

    let spec = ArchSpec {
        arch: config.arch,
        num_classes: c,
    };
    let mut net = build_model_for_input(
        spec,
        train_data.image_shape(),
        &config.placement,
        seed::derive(config.seed, "init"),
    )?;

    let mut optimizer = SgdMomentum::new(config.learning_rate, config.momentum);
    let dropout_base = seed::derive(config.seed, "dropout");
    let mut epoch_logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let shuffle_seed = seed::derive(config.seed, &format!("shuffle-epoch-{}", epoch));
        let dropout_seed = seed::derive_indexed(dropout_base, "epoch", epoch as u64);
        let (mean_loss, train_accuracy) = train_epoch(
            &mut net,
            &train_data,
            &corruption.noisy_labels,
            &mut optimizer,
            config.batch_size,
            shuffle_seed,
            dropout_seed,
        )?;
        let test_accuracy = evaluate_deterministic(&net, &test_data)?;
        epoch_logs.push(EpochLog {
            epoch,
            train_accuracy,
            test_accuracy,
            mean_loss,
        });
    }

    let final_eval_accuracy = epoch_logs
        .last()
        .map(|l| l.test_accuracy)
        .unwrap_or_default();
    let final_mc_accuracy = mc::mc_classify(
        &net,
        &test_data,
        config.mc_passes,
        seed::derive(config.seed, "mc"),
    )?;
    net.set_mode(ExecutionMode::Eval);
    Ok(ExperimentResult {
        epoch_logs,
        network: net,
        corruption,
        final_mc_accuracy,
        final_eval_accuracy,
        num_classes: c,
    })
}

/// epoch_log.csv rows: epoch, train_acc, test_acc, loss.
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_acc,test_acc,loss\n");
    for log in logs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            log.epoch, log.train_accuracy, log.test_accuracy, log.mean_loss
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_synthetic;
    use crate::models::PlacementKind;

    fn tiny_config(seed: u64, placement: PlacementKind) -> TrainConfig {
        TrainConfig {
            source: DatasetSource::Synthetic {
                n_train: 120,
                n_test: 60,
                classes: 4,
                shape: (1, 16, 16),
                data_seed: 99,
            },
            noise_rate: 0.25,
            noise_scheme: NoiseScheme::Exact,
            noise_kind: NoiseKind::Symmetric,
            arch: Arch::LeNet5,
            placement: DropoutPlacement::new(placement),
            epochs: 1,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            seed,
            mc_passes: 4,
            epsilon: EpsilonSpec::Relative(0.01),
            subset_size: 0,
            test_subset_size: 0,
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = make_synthetic(40, 4, (1, 16, 16), 5).unwrap();
        let placement = DropoutPlacement::new(PlacementKind::None);
        let mut net = build_model_for_input(
            ArchSpec {
                arch: Arch::LeNet5,
                num_classes: 4,
            },
            (1, 16, 16),
            &placement,
            7,
        )
        .unwrap();
        let reference = net.clone();
        let mut opt = SgdMomentum::new(0.0, 0.9);
        let acc_before = evaluate_deterministic(&net, &data).unwrap();
        train_epoch(&mut net, &data, &data.labels.clone(), &mut opt, 8, 1, 2).unwrap();
        let acc_after = evaluate_deterministic(&net, &data).unwrap();
        assert_eq!(acc_before, acc_after);
        for (a, b) in net.layers().iter().zip(reference.layers()) {
            if let (Some((wa, _)), Some((wb, _))) = (a.params(), b.params()) {
                assert_eq!(wa.data(), wb.data());
            }
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let data = make_synthetic(8, 4, (1, 16, 16), 5).unwrap().take(1);
        let placement = DropoutPlacement::new(PlacementKind::None);
        let mut net = build_model_for_input(
            ArchSpec {
                arch: Arch::LeNet5,
                num_classes: 4,
            },
            (1, 16, 16),
            &placement,
            3,
        )
        .unwrap();
        let mut opt = SgdMomentum::new(0.05, 0.9);
        let labels = data.labels.clone();
        let mut final_acc = 0.0;
        for epoch in 0..60 {
            let (_, acc) =
                train_epoch(&mut net, &data, &labels, &mut opt, 1, epoch, epoch).unwrap();
            final_acc = acc;
            if acc == 1.0 {
                break;
            }
        }
        assert_eq!(final_acc, 1.0, "one sample should be memorized");
    }

    #[test]
    fn epoch_is_deterministic_given_seeds() {
        let a = run_experiment(&tiny_config(11, PlacementKind::AllLayers)).unwrap();
        let b = run_experiment(&tiny_config(11, PlacementKind::AllLayers)).unwrap();
        assert_eq!(a.epoch_logs, b.epoch_logs);
        assert_eq!(a.final_mc_accuracy, b.final_mc_accuracy);
        for (la, lb) in a.network.layers().iter().zip(b.network.layers()) {
            if let (Some((wa, _)), Some((wb, _))) = (la.params(), lb.params()) {
                assert_eq!(wa.data(), wb.data());
            }
        }
    }

    #[test]
    fn changing_seed_changes_corruption_but_not_data() {
        let a = run_experiment(&tiny_config(1, PlacementKind::None)).unwrap();
        let b = run_experiment(&tiny_config(2, PlacementKind::None)).unwrap();
        assert_ne!(a.corruption.noisy_labels, b.corruption.noisy_labels);
        // dataset contents identical: both runs corrupt the same clean labels
        let (train_a, _) = load_datasets(&tiny_config(1, PlacementKind::None).source).unwrap();
        let (train_b, _) = load_datasets(&tiny_config(2, PlacementKind::None).source).unwrap();
        assert_eq!(train_a.images.data(), train_b.images.data());
        assert_eq!(train_a.labels, train_b.labels);
    }

    #[test]
    fn untrained_model_sits_at_chance() {
        let data = make_synthetic(2000, 10, (1, 16, 16), 21).unwrap();
        let net = build_model_for_input(
            ArchSpec {
                arch: Arch::LeNet5,
                num_classes: 10,
            },
            (1, 16, 16),
            &DropoutPlacement::new(PlacementKind::None),
            13,
        )
        .unwrap();
        let acc = evaluate_deterministic(&net, &data).unwrap();
        assert!(
            (acc - 0.1).abs() <= 0.05,
            "untrained accuracy {} should be near chance 0.1",
            acc
        );
    }

    #[test]
    fn empty_test_split_is_an_error() {
        // an empty LabeledDataset cannot even be constructed, so the
        // degenerate case surfaces from the experiment pipeline
        let mut cfg = tiny_config(1, PlacementKind::None);
        cfg.source = DatasetSource::Synthetic {
            n_train: 10,
            n_test: 0,
            classes: 2,
            shape: (1, 16, 16),
            data_seed: 1,
        };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn perfect_logits_oracle_scores_one() {
        // a Flatten+Dense net rigged to emit the true label as argmax
        let data = make_synthetic(12, 3, (1, 2, 2), 8).unwrap();
        // identity on a 3-class one-hot encoding delivered via bias trickery
        // is impossible from pixels, so instead check the counting helper
        let mut logits = Tensor::zeros(vec![12, 3]);
        for (i, &l) in data.labels.iter().enumerate() {
            logits.data_mut()[i * 3 + l] = 5.0;
        }
        assert_eq!(count_correct(&logits, &data.labels), 12);
    }

    #[test]
    fn epoch_log_csv_has_header_and_rows() {
        let csv = epoch_log_csv(&[EpochLog {
            epoch: 0,
            train_accuracy: 0.5,
            test_accuracy: 0.25,
            mean_loss: 1.5,
        }]);
        assert_eq!(csv, "epoch,train_acc,test_acc,loss\n0,0.5,0.25,1.5\n");
    }
}
