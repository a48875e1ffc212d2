//! Desk-scale calibration probe: times one epoch and prints the trend
//! numbers the acceptance criteria rely on. Not part of the test suite.

use droplab_core::models::{DropoutPlacement, PlacementKind};
use droplab_core::train::{
    run_experiment, DatasetSource, EpsilonSpec, NoiseKind, NoiseScheme, TrainConfig,
};

fn config(seed: u64, placement: PlacementKind, epochs: usize) -> TrainConfig {
    TrainConfig {
        source: DatasetSource::Synthetic {
            n_train: 10_000,
            n_test: 2_000,
            classes: 10,
            shape: (1, 28, 28),
            data_seed: 20_260_809,
        },
        noise_rate: 0.35,
        noise_scheme: NoiseScheme::Exact,
        noise_kind: NoiseKind::Symmetric,
        arch: droplab_core::models::Arch::LeNet5,
        placement: DropoutPlacement::new(placement),
        epochs,
        batch_size: 64,
        learning_rate: 0.01,
        momentum: 0.9,
        seed,
        mc_passes: 20,
        epsilon: EpsilonSpec::Relative(0.01),
        subset_size: 0,
        test_subset_size: 0,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(1);
    let seed: u64 = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(11);
    let placement = match args.get(3).map(String::as_str) {
        Some("all") => PlacementKind::AllLayers,
        Some("conv_only") => PlacementKind::ConvOnly,
        Some("fc_only") => PlacementKind::FcOnly,
        _ => PlacementKind::None,
    };
    let start = std::time::Instant::now();
    let result = run_experiment(&config(seed, placement, epochs)).unwrap();
    let elapsed = start.elapsed();
    for log in &result.epoch_logs {
        println!(
            "epoch {:2}  train {:.4}  test {:.4}  loss {:.4}",
            log.epoch, log.train_accuracy, log.test_accuracy, log.mean_loss
        );
    }
    println!(
        "final: eval {:.4}  mc {:.4}  ({} epochs in {:.1?}, {:.2?}/epoch)",
        result.final_eval_accuracy,
        result.final_mc_accuracy,
        epochs,
        elapsed,
        elapsed / epochs as u32
    );
}
