//! Experiment configuration files (TOML).
//!
//! Parsing is strict: unknown keys are rejected, and parse errors carry the
//! offending line. Every optional key has a documented default; `dataset`,
//! `arch`, and `output.dir` are required.
//!
//! ```toml
//! dataset = "mnist"            # mnist | cifar10 | synthetic
//! arch = "lenet5"              # lenet5 | convnet
//! placement = "all"            # none | all | conv_only | fc_only | custom:<bitstring>
//!
//! [data]                       # required for mnist / cifar10
//! train_images = "train-images.idx"   # mnist
//! train_labels = "train-labels.idx"
//! test_images = "t10k-images.idx"
//! test_labels = "t10k-labels.idx"
//! # train_batches = ["data_batch_1.bin", ...]   # cifar10
//! # test_batches = ["test_batch.bin"]
//!
//! [noise]
//! rate = 0.35                  # default 0.35
//! scheme = "exact"             # exact | matrix (default exact)
//! kind = "symmetric"           # symmetric | asymmetric (default symmetric)
//!
//! [dropout]
//! p_conv = 0.25                # default 0.25
//! p_fc = 0.5                   # default 0.5
//!
//! [train]
//! epochs = 30                  # default 30
//! batch = 64                   # default 64
//! lr = 0.01                    # default 0.01
//! momentum = 0.9               # default 0.9
//! seed = 1                     # default 1
//! subset_size = 0              # first n train samples; 0 = all (default)
//! test_subset_size = 0         # first n test samples; 0 = all (default)
//!
//! [mc]
//! k = 20                       # default 20
//!
//! [dissect]
//! epsilon_mode = "relative"    # relative | absolute (default relative)
//! epsilon = 0.01               # factor (relative) or threshold (absolute)
//! bins = 30                    # histogram bins (default 30)
//! # heatmap_image_index = 0    # emit heatmaps for this test image
//! capture = "means"            # means | full (default means)
//! mc_capture = "sample"        # sample | eval (default sample)
//!
//! [synthetic]                  # used when dataset = "synthetic"
//! n_train = 2000               # default 2000
//! n_test = 500                 # default 500
//! classes = 10                 # default 10
//! image_shape = [1, 28, 28]    # default [1, 28, 28]
//! seed = 7                     # data seed, independent of train.seed
//!
//! [output]
//! dir = "out/run"              # required
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dissect::{CaptureMode, McCaptureStyle};
use crate::error::{Error, Result};
use crate::models::{Arch, DropoutPlacement, PlacementKind};
use crate::train::{DatasetSource, EpsilonSpec, NoiseKind, NoiseScheme, TrainConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub arch: String,
    #[serde(default = "default_placement")]
    pub placement: String,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub dropout: DropoutSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub dissect: DissectSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    pub output: OutputSection,
}

fn default_placement() -> String {
    "none".into()
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_batches: Option<Vec<PathBuf>>,
    pub test_batches: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub rate: f64,
    pub scheme: String,
    pub kind: String,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            rate: 0.35,
            scheme: "exact".into(),
            kind: "symmetric".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutSection {
    pub p_conv: f64,
    pub p_fc: f64,
}

impl Default for DropoutSection {
    fn default() -> Self {
        DropoutSection {
            p_conv: 0.25,
            p_fc: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub subset_size: usize,
    pub test_subset_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 30,
            batch: 64,
            lr: 0.01,
            momentum: 0.9,
            seed: 1,
            subset_size: 0,
            test_subset_size: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub k: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { k: 20 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissectSection {
    pub epsilon_mode: String,
    pub epsilon: f64,
    pub bins: usize,
    pub heatmap_image_index: Option<usize>,
    pub capture: String,
    pub mc_capture: String,
}

impl Default for DissectSection {
    fn default() -> Self {
        DissectSection {
            epsilon_mode: "relative".into(),
            epsilon: 0.01,
            bins: 30,
            heatmap_image_index: None,
            capture: "means".into(),
            mc_capture: "sample".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub image_shape: [usize; 3],
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            n_train: 2000,
            n_test: 500,
            classes: 10,
            image_shape: [1, 28, 28],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// Dissection options resolved from the file.
#[derive(Debug, Clone)]
pub struct DissectOptions {
    pub epsilon: EpsilonSpec,
    pub bins: usize,
    pub heatmap_image_index: Option<usize>,
    pub capture: CaptureMode,
    pub mc_capture: McCaptureStyle,
}

#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub train: TrainConfig,
    pub dissect: DissectOptions,
    pub output_dir: PathBuf,
    pub arch: Arch,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        Self::from_str(&text)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let arch = match self.arch.as_str() {
            "lenet5" => Arch::LeNet5,
            "convnet" => Arch::ConvNet,
            other => {
                return Err(Error::Config(format!(
                    "arch must be \"lenet5\" or \"convnet\", got {:?}",
                    other
                )))
            }
        };
        let placement_kind = parse_placement(&self.placement)?;
        let source = self.dataset_source()?;
        let scheme = match self.noise.scheme.as_str() {
            "exact" => NoiseScheme::Exact,
            "matrix" => NoiseScheme::Matrix,
            other => {
                return Err(Error::Config(format!(
                    "noise.scheme must be \"exact\" or \"matrix\", got {:?}",
                    other
                )))
            }
        };
        let kind = match self.noise.kind.as_str() {
            "symmetric" => NoiseKind::Symmetric,
            "asymmetric" => NoiseKind::Asymmetric,
            other => {
                return Err(Error::Config(format!(
                    "noise.kind must be \"symmetric\" or \"asymmetric\", got {:?}",
                    other
                )))
            }
        };
        for (key, p) in [
            ("dropout.p_conv", self.dropout.p_conv),
            ("dropout.p_fc", self.dropout.p_fc),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{} must be in [0, 1), got {}",
                    key, p
                )));
            }
        }
        if self.dissect.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "dissect.epsilon must be positive, got {}",
                self.dissect.epsilon
            )));
        }
        if self.dissect.bins < 1 {
            return Err(Error::Config("dissect.bins must be at least 1".into()));
        }
        let epsilon = match self.dissect.epsilon_mode.as_str() {
            "relative" => EpsilonSpec::Relative(self.dissect.epsilon),
            "absolute" => EpsilonSpec::Absolute(self.dissect.epsilon),
            other => {
                return Err(Error::Config(format!(
                    "dissect.epsilon_mode must be \"relative\" or \"absolute\", got {:?}",
                    other
                )))
            }
        };
        let capture = match self.dissect.capture.as_str() {
            "means" => CaptureMode::MeansOnly,
            "full" => CaptureMode::FullMaps,
            other => {
                return Err(Error::Config(format!(
                    "dissect.capture must be \"means\" or \"full\", got {:?}",
                    other
                )))
            }
        };
        let mc_capture = match self.dissect.mc_capture.as_str() {
            "sample" => McCaptureStyle::Sample,
            "eval" => McCaptureStyle::EvalOnly,
            other => {
                return Err(Error::Config(format!(
                    "dissect.mc_capture must be \"sample\" or \"eval\", got {:?}",
                    other
                )))
            }
        };

        let train = TrainConfig {
            source,
            noise_rate: self.noise.rate,
            noise_scheme: scheme,
            noise_kind: kind,
            arch,
            placement: DropoutPlacement::with_rates(
                placement_kind,
                self.dropout.p_conv,
                self.dropout.p_fc,
            ),
            epochs: self.train.epochs,
            batch_size: self.train.batch,
            learning_rate: self.train.lr,
            momentum: self.train.momentum,
            seed: self.train.seed,
            mc_passes: self.mc.k,
            epsilon,
            subset_size: self.train.subset_size,
            test_subset_size: self.train.test_subset_size,
        };
        train.validate()?;
        Ok(ResolvedConfig {
            train,
            dissect: DissectOptions {
                epsilon,
                bins: self.dissect.bins,
                heatmap_image_index: self.dissect.heatmap_image_index,
                capture,
                mc_capture,
            },
            output_dir: self.output.dir.clone(),
            arch,
        })
    }

    fn dataset_source(&self) -> Result<DatasetSource> {
        match self.dataset.as_str() {
            "mnist" => {
                let data = self.data.as_ref().ok_or_else(|| {
                    Error::Config("dataset \"mnist\" requires a [data] section".into())
                })?;
                let get = |name: &str, v: &Option<PathBuf>| {
                    v.clone()
                        .ok_or_else(|| Error::Config(format!("missing key data.{}", name)))
                };
                Ok(DatasetSource::MnistIdx {
                    train_images: get("train_images", &data.train_images)?,
                    train_labels: get("train_labels", &data.train_labels)?,
                    test_images: get("test_images", &data.test_images)?,
                    test_labels: get("test_labels", &data.test_labels)?,
                })
            }
            "cifar10" => {
                let data = self.data.as_ref().ok_or_else(|| {
                    Error::Config("dataset \"cifar10\" requires a [data] section".into())
                })?;
                let train_batches = data.train_batches.clone().ok_or_else(|| {
                    Error::Config("missing key data.train_batches".into())
                })?;
                let test_batches = data.test_batches.clone().ok_or_else(|| {
                    Error::Config("missing key data.test_batches".into())
                })?;
                Ok(DatasetSource::Cifar10 {
                    train_batches,
                    test_batches,
                })
            }
            "synthetic" => Ok(DatasetSource::Synthetic {
                n_train: self.synthetic.n_train,
                n_test: self.synthetic.n_test,
                classes: self.synthetic.classes,
                shape: (
                    self.synthetic.image_shape[0],
                    self.synthetic.image_shape[1],
                    self.synthetic.image_shape[2],
                ),
                data_seed: self.synthetic.seed,
            }),
            other => Err(Error::Config(format!(
                "dataset must be \"mnist\", \"cifar10\", or \"synthetic\", got {:?}",
                other
            ))),
        }
    }
}

/// placement strings: none | all | conv_only | fc_only | custom:<bitstring>.
pub fn parse_placement(text: &str) -> Result<PlacementKind> {
    match text {
        "none" => Ok(PlacementKind::None),
        "all" => Ok(PlacementKind::AllLayers),
        "conv_only" => Ok(PlacementKind::ConvOnly),
        "fc_only" => Ok(PlacementKind::FcOnly),
        other => {
            if let Some(bits) = other.strip_prefix("custom:") {
                if bits.is_empty() || !bits.chars().all(|c| c == '0' || c == '1') {
                    return Err(Error::Config(format!(
                        "custom placement mask must be a 0/1 bitstring, got {:?}",
                        bits
                    )));
                }
                Ok(PlacementKind::Custom(
                    bits.chars().map(|c| c == '1').collect(),
                ))
            } else {
                Err(Error::Config(format!(
                    "placement must be none|all|conv_only|fc_only|custom:<bits>, got {:?}",
                    other
                )))
            }
        }
    }
}
