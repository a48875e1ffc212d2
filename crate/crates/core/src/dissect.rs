//! Activation dissection: per-neuron activation gamuts over a test set,
//! layer volatility statistics, unresponsive-neuron ratios, histograms,
//! and heatmap exports.
//!
//! Eligible layers are the post-ReLU outputs of every conv/fc layer plus
//! the raw logits of the final fc. A neuron is one channel of a conv
//! feature map or one unit of an fc layer; its gamut value for an image is
//! the mean of its (MC-averaged) feature map. MC-dropout models are
//! captured with dropout sampling active, averaging maps elementwise over
//! K passes; dropout-free models use a single Eval pass.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{ExecutionMode, Layer, Network};
use crate::parallel::{self, GRAD_PARTITIONS};
use crate::seed;
use crate::tensor::{mean_tensors, Tensor};
use crate::train::EpsilonSpec;

/// Whether full per-image feature maps are retained or only their means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    MeansOnly,
    FullMaps,
}

/// Whether MC-dropout models are captured with dropout sampling active
/// (averaging K passes, the default) or with dropout disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McCaptureStyle {
    Sample,
    EvalOnly,
}

/// All gamut values a_i^j of one neuron: one entry per test image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGamut {
    pub layer: String,
    pub neuron: usize,
    pub values: Vec<f64>,
}

impl ActivationGamut {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation (divide by N).
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LayerCapture {
    pub name: String,
    pub neuron_count: usize,
    pub map_rows: usize,
    pub map_cols: usize,
    pub gamuts: Vec<ActivationGamut>,
    /// `maps[image][neuron]`, present in FullMaps mode.
    pub maps: Option<Vec<Vec<Tensor>>>,
}

#[derive(Debug, Clone)]
pub struct ActivationCapture {
    pub layers: Vec<LayerCapture>,
    pub k: usize,
    pub n_images: usize,
    pub mode: CaptureMode,
}

struct EligibleSite {
    /// Index into the network's layer list whose output is captured.
    layer_index: usize,
    name: String,
    neurons: usize,
}

/// Post-ReLU sites of conv/fc layers, plus the raw output of a trailing
/// parameterized layer (the logits).
fn eligible_sites(net: &Network) -> Vec<EligibleSite> {
    let mut sites = Vec::new();
    let mut conv_idx = 0;
    let mut fc_idx = 1;
    let mut pending: Option<(usize, String, usize)> = None;
    for (idx, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Conv2d(c) => {
                pending = Some((idx, format!("conv{}", conv_idx), c.out_channels));
                conv_idx += 1;
            }
            Layer::Dense(d) => {
                pending = Some((idx, format!("fc{}", fc_idx), d.out_features));
                fc_idx += 1;
            }
            Layer::ReLU => {
                if let Some((_, name, neurons)) = pending.take() {
                    sites.push(EligibleSite {
                        layer_index: idx,
                        name,
                        neurons,
                    });
                }
            }
            _ => {}
        }
    }
    if let Some((idx, name, neurons)) = pending {
        sites.push(EligibleSite {
            layer_index: idx,
            name,
            neurons,
        });
    }
    sites
}

/// Per-site feature-map dimensions (rows, cols) from shape inference; fc
/// sites report 1x1.
fn site_map_dims(
    net: &Network,
    data: &LabeledDataset,
    sites: &[EligibleSite],
) -> Result<Vec<(usize, usize)>> {
    let (c, h, w) = data.image_shape();
    let mut shape = vec![1, c, h, w];
    let mut by_layer = Vec::with_capacity(net.layers().len());
    for (idx, layer) in net.layers().iter().enumerate() {
        shape = layer.output_shape(idx, &shape)?;
        by_layer.push(shape.clone());
    }
    Ok(sites
        .iter()
        .map(|site| {
            let s = &by_layer[site.layer_index];
            if s.len() == 4 {
                (s[2], s[3])
            } else {
                (1, 1)
            }
        })
        .collect())
}

/// Mean activation of one feature map: sum over all cells divided by the
/// cell count. For fc layers the map is 1x1 and the mean is the activation.
pub fn mean_map_activation(map: &Tensor) -> Result<f64> {
    if map.is_empty() {
        return Err(Error::InvalidArgument("empty feature map".into()));
    }
    Ok(map.data().iter().sum::<f64>() / map.len() as f64)
}

/// Slice neuron `c`'s 2-D map out of a cached layer output of shape
/// (1, C, H, W) or (1, F).
fn neuron_map(output: &Tensor, neuron: usize) -> Tensor {
    let shape = output.shape();
    if shape.len() == 4 {
        let (h, w) = (shape[2], shape[3]);
        let start = neuron * h * w;
        Tensor::new(vec![h, w], output.data()[start..start + h * w].to_vec())
            .expect("neuron map slice")
    } else {
        Tensor::new(vec![1, 1], vec![output.data()[neuron]]).expect("unit map")
    }
}

/// Run the test set through the network and collect gamuts (and, in
/// FullMaps mode, the averaged per-image feature maps) for every eligible
/// layer. Images are processed independently with pre-derived seeds and
/// merged in index order.
pub fn capture_activations(
    net: &Network,
    data: &LabeledDataset,
    k: usize,
    capture_seed: u64,
    mode: CaptureMode,
    style: McCaptureStyle,
) -> Result<ActivationCapture> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset for capture".into()));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("capture needs k >= 1".into()));
    }
    let sites = eligible_sites(net);
    if sites.is_empty() {
        return Err(Error::InvalidArgument(
            "network has no conv/fc layers to dissect".into(),
        ));
    }
    let site_dims = site_map_dims(net, data, &sites)?;

    let stochastic = net.has_dropout() && style == McCaptureStyle::Sample;
    let mut run_net = net.clone();
    run_net.set_mode(if stochastic {
        ExecutionMode::MCSample
    } else {
        ExecutionMode::Eval
    });
    let run_ref = &run_net;
    let sites_ref = &sites;

    type ImageCapture = Vec<Vec<(f64, Option<Tensor>)>>; // [site][neuron]
    let ranges = parallel::partition_ranges(data.len(), GRAD_PARTITIONS);
    let parts = parallel::run_partitioned(&ranges, |_, range| {
        let mut images: Vec<ImageCapture> = Vec::with_capacity(range.len());
        for image_idx in range {
            let x = data.image(image_idx);
            let image_seed = seed::derive_indexed(capture_seed, "image", image_idx as u64);
            let passes = if stochastic { k } else { 1 };
            let mut caches = Vec::with_capacity(passes);
            for pass in 0..passes {
                let mut rng = seed::rng(seed::derive_indexed(image_seed, "pass", pass as u64));
                let rng_opt = if stochastic { Some(&mut rng) } else { None };
                let (_, cache) = run_ref.forward_single(&x, rng_opt)?;
                caches.push(cache);
            }
            let mut per_site: ImageCapture = Vec::with_capacity(sites_ref.len());
            for site in sites_ref {
                let mut per_neuron = Vec::with_capacity(site.neurons);
                for neuron in 0..site.neurons {
                    let pass_maps: Vec<Tensor> = caches
                        .iter()
                        .map(|cache| neuron_map(&cache.outputs[site.layer_index], neuron))
                        .collect();
                    let averaged = mean_tensors(&pass_maps)?;
                    let a = mean_map_activation(&averaged)?;
                    per_neuron.push((
                        a,
                        if mode == CaptureMode::FullMaps {
                            Some(averaged)
                        } else {
                            None
                        },
                    ));
                }
                per_site.push(per_neuron);
            }
            images.push(per_site);
        }
        Ok::<Vec<ImageCapture>, Error>(images)
    });

    let mut all_images: Vec<ImageCapture> = Vec::with_capacity(data.len());
    for part in parts {
        all_images.extend(part?);
    }

    let mut layers = Vec::with_capacity(sites.len());
    for (s, site) in sites.iter().enumerate() {
        let mut gamuts: Vec<ActivationGamut> = (0..site.neurons)
            .map(|neuron| ActivationGamut {
                layer: site.name.clone(),
                neuron,
                values: Vec::with_capacity(data.len()),
            })
            .collect();
        let mut maps: Option<Vec<Vec<Tensor>>> = match mode {
            CaptureMode::FullMaps => Some(Vec::with_capacity(data.len())),
            CaptureMode::MeansOnly => None,
        };
        for image in &mut all_images {
            let mut image_maps = Vec::new();
            for (neuron, (a, map)) in image[s].drain(..).enumerate() {
                gamuts[neuron].values.push(a);
                if let Some(map) = map {
                    image_maps.push(map);
                }
            }
            if let Some(maps) = &mut maps {
                maps.push(image_maps);
            }
        }
        layers.push(LayerCapture {
            name: site.name.clone(),
            neuron_count: site.neurons,
            map_rows: site_dims[s].0,
            map_cols: site_dims[s].1,
            gamuts,
            maps,
        });
    }

    Ok(ActivationCapture {
        layers,
        k,
        n_images: data.len(),
        mode,
    })
}

/// Layer volatility: V_l is the mean over neurons of gamut means, S_l the
/// mean over neurons of gamut (population) standard deviations.
pub fn layer_volatility(gamuts: &[ActivationGamut]) -> Result<(f64, f64)> {
    if gamuts.is_empty() {
        return Err(Error::InvalidArgument("no gamuts for layer".into()));
    }
    let n = gamuts.len() as f64;
    let v = gamuts.iter().map(ActivationGamut::mean).sum::<f64>() / n;
    let s = gamuts.iter().map(ActivationGamut::std).sum::<f64>() / n;
    Ok((v, s))
}

/// Count and fraction of neurons whose gamut-mean magnitude is at most
/// epsilon. The absolute value handles the logits layer, which the tables
/// report with negative means.
pub fn unresponsive_stats(gamuts: &[ActivationGamut], epsilon: f64) -> Result<(usize, f64)> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {}",
            epsilon
        )));
    }
    if gamuts.is_empty() {
        return Err(Error::InvalidArgument("no gamuts for layer".into()));
    }
    let count = gamuts
        .iter()
        .filter(|g| g.mean().abs() <= epsilon)
        .count();
    Ok((count, count as f64 / gamuts.len() as f64))
}

/// Equal-width histogram spanning [min, max] of the gamut. Returns
/// bin_count+1 edges and bin_count counts summing to the gamut length; the
/// maximum value lands in the last bin. A constant gamut occupies bin 0.
pub fn gamut_histogram(values: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if bins < 1 {
        return Err(Error::InvalidArgument("need at least 1 bin".into()));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty gamut".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let edges: Vec<f64> = (0..=bins)
        .map(|i| min + (max - min) * i as f64 / bins as f64)
        .collect();
    let mut counts = vec![0usize; bins];
    let width = (max - min) / bins as f64;
    for &v in values {
        let bin = if width == 0.0 {
            0
        } else {
            (((v - min) / width) as usize).min(bins - 1)
        };
        counts[bin] += 1;
    }
    Ok((edges, counts))
}

/// The neurons of one layer ranked for heatmap export.
#[derive(Debug, Clone)]
pub struct HeatmapExport {
    pub layer: String,
    pub image_index: usize,
    /// (neuron index, gamut mean over the whole test set, averaged map),
    /// ranked descending by gamut mean with ties broken by lower index.
    pub entries: Vec<(usize, f64, Tensor)>,
    pub selection_rule: String,
}

/// Rank neurons by their gamut mean over the whole test set (not the single
/// displayed image) and export the top `top_n` maps for `image_index`.
pub fn top_neuron_heatmaps(
    capture: &ActivationCapture,
    layer_name: &str,
    image_index: usize,
    top_n: usize,
) -> Result<HeatmapExport> {
    let layer = capture
        .layers
        .iter()
        .find(|l| l.name == layer_name)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("no captured layer named {:?}", layer_name))
        })?;
    let maps = layer.maps.as_ref().ok_or_else(|| {
        Error::InvalidArgument(
            "heatmap export requires full-map capture; this capture stored only per-map means"
                .into(),
        )
    })?;
    if image_index >= capture.n_images {
        return Err(Error::InvalidArgument(format!(
            "image index {} out of range for {} captured images",
            image_index, capture.n_images
        )));
    }
    let mut ranked: Vec<(usize, f64)> = layer
        .gamuts
        .iter()
        .map(|g| (g.neuron, g.mean()))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(top_n.min(layer.neuron_count));
    let entries = ranked
        .into_iter()
        .map(|(neuron, mean)| (neuron, mean, maps[image_index][neuron].clone()))
        .collect();
    Ok(HeatmapExport {
        layer: layer_name.to_string(),
        image_index,
        entries,
        selection_rule: format!("top {} neurons by gamut mean, ties to lower index", top_n),
    })
}

/// Write one plain-text PGM (P2) per exported neuron plus an index CSV.
/// All maps share one linear intensity scale spanning the export's global
/// min and max.
pub fn write_heatmap_pgms(export: &HeatmapExport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, map) in &export.entries {
        for &v in map.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    let mut written = Vec::new();
    let mut index = String::from("rank,neuron,gamut_mean,file\n");
    for (rank, (neuron, mean, map)) in export.entries.iter().enumerate() {
        let (h, w) = (map.shape()[0], map.shape()[1]);
        let mut pgm = format!("P2\n{} {}\n255\n", w, h);
        for y in 0..h {
            let row: Vec<String> = (0..w)
                .map(|x| {
                    let v = map.data()[y * w + x];
                    let level = if span == 0.0 {
                        0
                    } else {
                        ((v - lo) / span * 255.0).round() as u32
                    };
                    level.to_string()
                })
                .collect();
            let _ = writeln!(pgm, "{}", row.join(" "));
        }
        let file = dir.join(format!("neuron_{:04}.pgm", neuron));
        std::fs::write(&file, pgm)?;
        let _ = writeln!(
            index,
            "{},{},{},{}",
            rank,
            neuron,
            mean,
            file.file_name().unwrap().to_string_lossy()
        );
        written.push(file);
    }
    std::fs::write(dir.join("index.csv"), index)?;
    Ok(written)
}

/// Per-layer statistics in the tables' schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerStats {
    pub name: String,
    pub neuron_count: usize,
    /// Mean of per-neuron gamut means.
    pub v_l: f64,
    /// Mean of per-neuron gamut standard deviations.
    pub s_l: f64,
    pub unresponsive_count: usize,
    pub unresponsive_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissectionReport {
    pub layers: Vec<LayerStats>,
    pub k: usize,
    pub n_images: usize,
    /// Resolved absolute threshold actually applied.
    pub epsilon: f64,
    pub epsilon_mode: String,
    pub capture_style: String,
}

impl DissectionReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report serialization: {}", e)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad report: {}", e)))
    }

    pub fn inventory(&self) -> Vec<(String, usize)> {
        self.layers
            .iter()
            .map(|l| (l.name.clone(), l.neuron_count))
            .collect()
    }
}

/// Resolve the unresponsive threshold against a capture. Relative mode
/// scales the model-wide mean of |gamut means|; an all-zero model floors at
/// the smallest positive f64 so fully dead layers still count as
/// unresponsive.
pub fn resolve_epsilon(spec: EpsilonSpec, capture: &ActivationCapture) -> f64 {
    match spec {
        EpsilonSpec::Absolute(v) => v,
        EpsilonSpec::Relative(factor) => {
            let mut total = 0.0;
            let mut count = 0usize;
            for layer in &capture.layers {
                for gamut in &layer.gamuts {
                    total += gamut.mean().abs();
                    count += 1;
                }
            }
            let global = if count == 0 { 0.0 } else { total / count as f64 };
            (factor * global).max(f64::MIN_POSITIVE)
        }
    }
}

/// Capture (means only) and reduce to one LayerStats per eligible layer in
/// conv0..fc order.
pub fn dissection_report(
    net: &Network,
    data: &LabeledDataset,
    k: usize,
    epsilon: EpsilonSpec,
    capture_seed: u64,
    style: McCaptureStyle,
) -> Result<DissectionReport> {
    let capture = capture_activations(net, data, k, capture_seed, CaptureMode::MeansOnly, style)?;
    report_from_capture(&capture, epsilon, style)
}

/// Reduce an existing capture to the report (shared by the CLI, which may
/// also need the capture for heatmaps/histograms).
pub fn report_from_capture(
    capture: &ActivationCapture,
    epsilon: EpsilonSpec,
    style: McCaptureStyle,
) -> Result<DissectionReport> {
    let eps = resolve_epsilon(epsilon, capture);
    let mut layers = Vec::with_capacity(capture.layers.len());
    for layer in &capture.layers {
        let (v_l, s_l) = layer_volatility(&layer.gamuts)?;
        let (unresponsive_count, unresponsive_ratio) = unresponsive_stats(&layer.gamuts, eps)?;
        layers.push(LayerStats {
            name: layer.name.clone(),
            neuron_count: layer.neuron_count,
            v_l,
            s_l,
            unresponsive_count,
            unresponsive_ratio,
        });
    }
    Ok(DissectionReport {
        layers,
        k: capture.k,
        n_images: capture.n_images,
        epsilon: eps,
        epsilon_mode: match epsilon {
            EpsilonSpec::Relative(f) => format!("relative({})", f),
            EpsilonSpec::Absolute(v) => format!("absolute({})", v),
        },
        capture_style: match style {
            McCaptureStyle::Sample => "sample".into(),
            McCaptureStyle::EvalOnly => "eval".into(),
        },
    })
}

/// Flat CSV in the tables' row/column schema: one column per layer, rows
/// for activation std (S_l), activation mean (V_l), and the unresponsive
/// ratio.
pub fn report_csv(report: &DissectionReport) -> String {
    let mut out = String::from("metric");
    for l in &report.layers {
        let _ = write!(out, ",{}", l.name);
    }
    out.push('\n');
    let rows: [(&str, Box<dyn Fn(&LayerStats) -> String>); 3] = [
        ("activation_std", Box::new(|l: &LayerStats| l.s_l.to_string())),
        ("activation_mean", Box::new(|l: &LayerStats| l.v_l.to_string())),
        (
            "unresponsive_ratio",
            Box::new(|l: &LayerStats| l.unresponsive_ratio.to_string()),
        ),
    ];
    for (name, value) in rows {
        out.push_str(name);
        for l in &report.layers {
            let _ = write!(out, ",{}", value(l));
        }
        out.push('\n');
    }
    out
}

/// Per-neuron histogram CSV for one captured layer.
pub fn histogram_csv(layer: &LayerCapture, bins: usize) -> Result<String> {
    let mut out = String::from("neuron,bin_low,bin_high,count\n");
    for gamut in &layer.gamuts {
        let (edges, counts) = gamut_histogram(&gamut.values, bins)?;
        for (b, &count) in counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", gamut.neuron, edges[b], edges[b + 1], count);
        }
    }
    Ok(out)
}

/// Side-by-side comparison of two reports sharing a layer inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub layers: usize,
    pub hidden_layers: usize,
    /// Layers where B's V_l is strictly lower than A's.
    pub b_lower_v: usize,
    pub b_lower_s: usize,
    /// Hidden layers (all but the final logits layer) where B's
    /// unresponsive ratio is strictly higher.
    pub b_higher_unresponsive_hidden: usize,
}

pub fn compare_reports(
    a: &DissectionReport,
    b: &DissectionReport,
) -> Result<(String, CompareSummary)> {
    if a.inventory() != b.inventory() {
        return Err(Error::InvalidArgument(format!(
            "reports disagree on layer inventory: {:?} vs {:?}",
            a.inventory(),
            b.inventory()
        )));
    }
    let mut csv = String::from(
        "layer,a_v,b_v,delta_v,a_s,b_s,delta_s,a_unresponsive,b_unresponsive,delta_unresponsive\n",
    );
    let mut summary = CompareSummary {
        layers: a.layers.len(),
        hidden_layers: a.layers.len().saturating_sub(1),
        b_lower_v: 0,
        b_lower_s: 0,
        b_higher_unresponsive_hidden: 0,
    };
    for (i, (la, lb)) in a.layers.iter().zip(&b.layers).enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            la.name,
            la.v_l,
            lb.v_l,
            lb.v_l - la.v_l,
            la.s_l,
            lb.s_l,
            lb.s_l - la.s_l,
            la.unresponsive_ratio,
            lb.unresponsive_ratio,
            lb.unresponsive_ratio - la.unresponsive_ratio
        );
        if lb.v_l < la.v_l {
            summary.b_lower_v += 1;
        }
        if lb.s_l < la.s_l {
            summary.b_lower_s += 1;
        }
        if i + 1 < a.layers.len() && lb.unresponsive_ratio > la.unresponsive_ratio {
            summary.b_higher_unresponsive_hidden += 1;
        }
    }
    let _ = writeln!(
        csv,
        "# summary: b_lower_v={}/{} b_lower_s={}/{} b_higher_unresponsive_hidden={}/{}",
        summary.b_lower_v,
        summary.layers,
        summary.b_lower_s,
        summary.layers,
        summary.b_higher_unresponsive_hidden,
        summary.hidden_layers
    );
    Ok((csv, summary))
}
