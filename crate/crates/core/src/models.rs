//! The two experiment architectures and their dropout placement mask.
//!
//! Dropout-eligible sites sit after every ReLU; the final logits layer never
//! carries dropout. LeNet5 has 4 sites (2 conv, 2 fc), ConvNet has 6
//! (4 conv, 2 fc). Since dropout layers hold no parameters and weight init
//! draws in layer order, every placement of the same architecture and seed
//! shares bitwise-identical initial weights.

use crate::error::{Error, Result};
use crate::nn::{init, Conv2d, Dense, Layer, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    LeNet5,
    ConvNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub arch: Arch,
    pub num_classes: usize,
}

impl ArchSpec {
    pub fn lenet5(num_classes: usize) -> Self {
        ArchSpec {
            arch: Arch::LeNet5,
            num_classes,
        }
    }

    pub fn convnet(num_classes: usize) -> Self {
        ArchSpec {
            arch: Arch::ConvNet,
            num_classes,
        }
    }

    /// Canonical input shape: LeNet5 on 1x28x28, ConvNet on 3x32x32.
    pub fn canonical_input(&self) -> (usize, usize, usize) {
        match self.arch {
            Arch::LeNet5 => (1, 28, 28),
            Arch::ConvNet => (3, 32, 32),
        }
    }
}

/// Which dropout-eligible sites are populated.
#[derive(Debug, Clone, PartialEq)]
pub enum PlacementKind {
    /// The certainty model: zero dropout layers.
    None,
    AllLayers,
    ConvOnly,
    FcOnly,
    /// Explicit mask over the sites in network order.
    Custom(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutPlacement {
    pub kind: PlacementKind,
    /// Drop probability at conv sites.
    pub p_conv: f64,
    /// Drop probability at fc sites.
    pub p_fc: f64,
}

impl DropoutPlacement {
    pub fn new(kind: PlacementKind) -> Self {
        DropoutPlacement {
            kind,
            p_conv: 0.25,
            p_fc: 0.5,
        }
    }

    pub fn with_rates(kind: PlacementKind, p_conv: f64, p_fc: f64) -> Self {
        DropoutPlacement { kind, p_conv, p_fc }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Site {
    Conv,
    Fc,
}

/// Blueprint rows: (layer template, optional dropout site after it).
fn blueprint(spec: ArchSpec, input: (usize, usize, usize)) -> Result<Vec<(Layer, Option<Site>)>> {
    let (in_ch, in_h, in_w) = input;
    let c = spec.num_classes;
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {}",
            c
        )));
    }
    let rows: Vec<(Layer, Option<Site>)> = match spec.arch {
        Arch::LeNet5 => {
            let h = in_h.checked_sub(4).filter(|&v| v >= 2).ok_or_else(|| {
                Error::InvalidArgument(format!("input {}x{} too small for LeNet5", in_h, in_w))
            })?;
            let w = in_w - 4;
            let (h, w) = (h / 2, w / 2); // pool 1
            let (h, w) = (h - 4, w - 4); // conv 2 (5x5, valid)
            let (h, w) = (h / 2, w / 2); // pool 2
            let flat = 16 * h * w;
            vec![
                (Layer::Conv2d(Conv2d::new(in_ch, 6, 5, 1, 0)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::MaxPool2d { window: 2 }, None),
                (Layer::Conv2d(Conv2d::new(6, 16, 5, 1, 0)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::MaxPool2d { window: 2 }, None),
                (Layer::Flatten, None),
                (Layer::Dense(Dense::new(flat, 120)), None),
                (Layer::ReLU, Some(Site::Fc)),
                (Layer::Dense(Dense::new(120, 84)), None),
                (Layer::ReLU, Some(Site::Fc)),
                (Layer::Dense(Dense::new(84, c)), None),
            ]
        }
        Arch::ConvNet => {
            // 3x3/stride-1/pad-1 convs preserve spatial dims; two 2x2 pools
            let (h, w) = (in_h / 2, in_w / 2);
            let (h, w) = (h / 2, w / 2);
            if h == 0 || w == 0 {
                return Err(Error::InvalidArgument(format!(
                    "input {}x{} too small for ConvNet",
                    in_h, in_w
                )));
            }
            let flat = 256 * h * w;
            vec![
                (Layer::Conv2d(Conv2d::new(in_ch, 48, 3, 1, 1)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::Conv2d(Conv2d::new(48, 96, 3, 1, 1)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::MaxPool2d { window: 2 }, None),
                (Layer::Conv2d(Conv2d::new(96, 192, 3, 1, 1)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::Conv2d(Conv2d::new(192, 256, 3, 1, 1)), None),
                (Layer::ReLU, Some(Site::Conv)),
                (Layer::MaxPool2d { window: 2 }, None),
                (Layer::Flatten, None),
                (Layer::Dense(Dense::new(flat, 512)), None),
                (Layer::ReLU, Some(Site::Fc)),
                (Layer::Dense(Dense::new(512, 128)), None),
                (Layer::ReLU, Some(Site::Fc)),
                (Layer::Dense(Dense::new(128, c)), None),
            ]
        }
    };
    Ok(rows)
}

/// Number of dropout-eligible sites for an architecture.
pub fn dropout_sites(spec: ArchSpec) -> usize {
    match spec.arch {
        Arch::LeNet5 => 4,
        Arch::ConvNet => 6,
    }
}

/// Build a seeded network on the architecture's canonical input shape.
pub fn build_model(spec: ArchSpec, placement: &DropoutPlacement, seed: u64) -> Result<Network> {
    build_model_for_input(spec, spec.canonical_input(), placement, seed)
}

/// Build a seeded network for an explicit (channels, height, width) input.
pub fn build_model_for_input(
    spec: ArchSpec,
    input: (usize, usize, usize),
    placement: &DropoutPlacement,
    seed: u64,
) -> Result<Network> {
    let rows = blueprint(spec, input)?;
    let sites: Vec<Site> = rows.iter().filter_map(|(_, s)| *s).collect();
    let mask: Vec<bool> = match &placement.kind {
        PlacementKind::None => vec![false; sites.len()],
        PlacementKind::AllLayers => vec![true; sites.len()],
        PlacementKind::ConvOnly => sites.iter().map(|&s| s == Site::Conv).collect(),
        PlacementKind::FcOnly => sites.iter().map(|&s| s == Site::Fc).collect(),
        PlacementKind::Custom(m) => {
            if m.len() != sites.len() {
                return Err(Error::InvalidArgument(format!(
                    "custom placement mask has {} entries, architecture has {} dropout sites",
                    m.len(),
                    sites.len()
                )));
            }
            m.clone()
        }
    };

    let mut layers = Vec::new();
    let mut site_idx = 0;
    for (layer, site) in rows {
        layers.push(layer);
        if let Some(site) = site {
            if mask[site_idx] {
                let rate = match site {
                    Site::Conv => placement.p_conv,
                    Site::Fc => placement.p_fc,
                };
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidArgument(format!(
                        "dropout rate must be in [0, 1), got {}",
                        rate
                    )));
                }
                layers.push(Layer::Dropout { rate });
            }
            site_idx += 1;
        }
    }
    let mut net = Network::new(layers);
    init::init_network(&mut net, seed);
    validate_shapes(&net, input)?;
    Ok(net)
}

/// Fold the shape math over the layer list to catch construction errors.
fn validate_shapes(net: &Network, (c, h, w): (usize, usize, usize)) -> Result<()> {
    let mut shape = vec![1, c, h, w];
    for (idx, layer) in net.layers().iter().enumerate() {
        shape = layer.output_shape(idx, &shape)?;
    }
    Ok(())
}

/// Paper-style layer names with neuron counts: conv layers numbered from
/// conv0, fully connected layers from fc1. Neuron count is output channels
/// for conv and output features for fc.
pub fn layer_inventory(net: &Network) -> Vec<(String, usize)> {
    let mut inventory = Vec::new();
    let mut conv_idx = 0;
    let mut fc_idx = 1;
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                inventory.push((format!("conv{}", conv_idx), c.out_channels));
                conv_idx += 1;
            }
            Layer::Dense(d) => {
                inventory.push((format!("fc{}", fc_idx), d.out_features));
                fc_idx += 1;
            }
            _ => {}
        }
    }
    inventory
}
