//! Subcommand implementations.

use std::fs;
use std::path::Path;

use droplab_core::config::{parse_placement, ExperimentConfig, ResolvedConfig};
use droplab_core::dissect::{self, CaptureMode, DissectionReport};
use droplab_core::error::{Error, Result};
use droplab_core::models::{build_model_for_input, layer_inventory, ArchSpec, DropoutPlacement};
use droplab_core::nn::{checkpoint, Network};
use droplab_core::train::{self, run_experiment, ExperimentResult, TrainConfig};
use droplab_core::{mc, seed};

pub fn train(config_path: &Path, force: bool) -> Result<()> {
    let resolved = ExperimentConfig::from_path(config_path)?.resolve()?;
    ensure_output_dir(&resolved.output_dir, force)?;
    let result = run_experiment(&resolved.train)?;
    write_run_outputs(&resolved.output_dir, &result)?;
    println!(
        "trained {} epochs: train_acc={:.4} test_acc={:.4} mc_acc={:.4}",
        result.epoch_logs.len(),
        result.epoch_logs.last().map(|l| l.train_accuracy).unwrap_or(0.0),
        result.final_eval_accuracy,
        result.final_mc_accuracy,
    );
    println!("outputs in {}", resolved.output_dir.display());
    Ok(())
}

fn ensure_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to write anyway",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_run_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    fs::write(
        dir.join("epoch_log.csv"),
        train::epoch_log_csv(&result.epoch_logs),
    )?;
    checkpoint::save(&result.network, &dir.join("checkpoint.dlab"))?;
    fs::write(
        dir.join("corruption_manifest.json"),
        result.corruption.to_json()?,
    )?;
    Ok(())
}

pub fn dissect(config_path: &Path, checkpoint_path: &Path) -> Result<()> {
    let resolved = ExperimentConfig::from_path(config_path)?.resolve()?;
    let net = checkpoint::load(checkpoint_path)?;
    let (_, test_data) = train::load_datasets(&resolved.train.source)?;
    let test_data = test_data.take(resolved.train.test_subset_size);

    check_architecture(&resolved, &net, test_data.image_shape(), test_data.num_classes)?;

    let opts = &resolved.dissect;
    if opts.heatmap_image_index.is_some() && opts.capture != CaptureMode::FullMaps {
        return Err(Error::Config(
            "heatmaps need full feature maps: set dissect.capture = \"full\"".into(),
        ));
    }

    let capture_seed = seed::derive(resolved.train.seed, "dissect-capture");
    let capture = dissect::capture_activations(
        &net,
        &test_data,
        resolved.train.mc_passes,
        capture_seed,
        opts.capture,
        opts.mc_capture,
    )?;
    let report = dissect::report_from_capture(&capture, opts.epsilon, opts.mc_capture)?;

    let out = resolved.output_dir.join("dissection");
    fs::create_dir_all(&out)?;
    fs::write(out.join("dissection.json"), report.to_json()?)?;
    fs::write(out.join("dissection.csv"), dissect::report_csv(&report))?;

    let hist_dir = out.join("histograms");
    fs::create_dir_all(&hist_dir)?;
    for layer in &capture.layers {
        fs::write(
            hist_dir.join(format!("{}.csv", layer.name)),
            dissect::histogram_csv(layer, opts.bins)?,
        )?;
    }

    if let Some(image_index) = opts.heatmap_image_index {
        for layer in &capture.layers {
            // spatial maps only; fc maps are 1x1
            if layer.map_rows * layer.map_cols <= 1 {
                continue;
            }
            let export = dissect::top_neuron_heatmaps(&capture, &layer.name, image_index, 10)?;
            dissect::write_heatmap_pgms(&export, &out.join("heatmaps").join(&layer.name))?;
        }
    }

    let predictions = mc::mc_predict_dataset(
        &net,
        &test_data,
        resolved.train.mc_passes,
        seed::derive(resolved.train.seed, "uncertainty"),
    )?;
    fs::write(out.join("uncertainty.csv"), mc::uncertainty_csv(&predictions))?;

    println!("dissection written to {}", out.display());
    Ok(())
}

/// The checkpoint must carry the architecture the config names: compare
/// conv/fc inventories.
fn check_architecture(
    resolved: &ResolvedConfig,
    net: &Network,
    input_shape: (usize, usize, usize),
    num_classes: usize,
) -> Result<()> {
    let reference = build_model_for_input(
        ArchSpec {
            arch: resolved.arch,
            num_classes,
        },
        input_shape,
        &resolved.train.placement,
        0,
    )?;
    let expected = layer_inventory(&reference);
    let found = layer_inventory(net);
    if expected != found {
        return Err(Error::Data(format!(
            "checkpoint does not match config arch: expected layer inventory {:?}, found {:?}",
            expected, found
        )));
    }
    Ok(())
}

pub fn compare(report_a: &Path, report_b: &Path, output: Option<&Path>) -> Result<()> {
    let a = DissectionReport::from_json(&fs::read_to_string(report_a)?)?;
    let b = DissectionReport::from_json(&fs::read_to_string(report_b)?)?;
    let (csv, summary) =
        dissect::compare_reports(&a, &b).map_err(|e| Error::Data(e.to_string()))?;
    print!("{}", csv);
    println!(
        "layers where B has lower V_l: {}/{}; lower S_l: {}/{}; higher unresponsive ratio (hidden): {}/{}",
        summary.b_lower_v,
        summary.layers,
        summary.b_lower_s,
        summary.layers,
        summary.b_higher_unresponsive_hidden,
        summary.hidden_layers
    );
    if let Some(path) = output {
        fs::write(path, &csv)?;
    }
    Ok(())
}

pub fn sweep(config_path: &Path, placements: &[String], force: bool) -> Result<()> {
    if placements.is_empty() {
        return Err(Error::Config("sweep needs at least one placement".into()));
    }
    let base = ExperimentConfig::from_path(config_path)?.resolve()?;
    // parse all placements up front so a typo fails before any training
    let parsed: Vec<(String, DropoutPlacement)> = placements
        .iter()
        .map(|p| {
            Ok((
                p.replace(':', "_"),
                DropoutPlacement::with_rates(
                    parse_placement(p)?,
                    base.train.placement.p_conv,
                    base.train.placement.p_fc,
                ),
            ))
        })
        .collect::<Result<_>>()?;

    ensure_output_dir(&base.output_dir, force)?;
    let (train_data, test_data) = train::load_datasets(&base.train.source)?;

    let mut results: Vec<(String, ExperimentResult)> = Vec::new();
    for (name, placement) in parsed {
        let cfg = TrainConfig {
            placement,
            ..base.train.clone()
        };
        let subdir = base.output_dir.join(&name);
        ensure_output_dir(&subdir, force)?;
        let result = train::run_experiment_with_data(&cfg, Some((&train_data, &test_data)))?;
        write_run_outputs(&subdir, &result)?;
        println!(
            "{}: train_acc={:.4} test_acc={:.4} mc_acc={:.4}",
            name,
            result.epoch_logs.last().map(|l| l.train_accuracy).unwrap_or(0.0),
            result.final_eval_accuracy,
            result.final_mc_accuracy,
        );
        results.push((name, result));
    }

    fs::write(
        base.output_dir.join("sweep_accuracy.csv"),
        sweep_accuracy_csv(&results),
    )?;
    fs::write(
        base.output_dir.join("sweep_summary.csv"),
        sweep_summary_csv(&results),
    )?;
    println!("sweep outputs in {}", base.output_dir.display());
    Ok(())
}

/// Per-epoch clean-test accuracy, one column per placement.
fn sweep_accuracy_csv(results: &[(String, ExperimentResult)]) -> String {
    let mut out = String::from("epoch");
    for (name, _) in results {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let epochs = results
        .iter()
        .map(|(_, r)| r.epoch_logs.len())
        .max()
        .unwrap_or(0);
    for epoch in 0..epochs {
        out.push_str(&epoch.to_string());
        for (_, result) in results {
            out.push(',');
            if let Some(log) = result.epoch_logs.get(epoch) {
                out.push_str(&log.test_accuracy.to_string());
            }
        }
        out.push('\n');
    }
    out
}

fn sweep_summary_csv(results: &[(String, ExperimentResult)]) -> String {
    let mut out = String::from("placement,final_train_acc,final_test_acc,final_mc_acc\n");
    for (name, result) in results {
        out.push_str(&format!(
            "{},{},{},{}\n",
            name,
            result.epoch_logs.last().map(|l| l.train_accuracy).unwrap_or(0.0),
            result.final_eval_accuracy,
            result.final_mc_accuracy,
        ));
    }
    out
}
