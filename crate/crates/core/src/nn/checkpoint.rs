//! Versioned binary weight checkpoints.
//!
//! Layout (all multi-byte integers and floats little-endian unless noted):
//!
//! ```text
//! magic       4 bytes  "DLAB"
//! version     u32      currently 1
//! layer_count u32
//! per layer:
//!   kind      u8       0=Conv2d 1=Dense 2=ReLU 3=MaxPool2d 4=Flatten 5=Dropout
//!   Conv2d:   stride u32, padding u32, then weight + bias tensors
//!   Dense:    weight + bias tensors
//!   MaxPool2d: window u32
//!   Dropout:  rate f64
//! tensor:
//!   ndim      u32
//!   dims      ndim × u32
//!   data      prod(dims) × f64
//! ```
//!
//! Conv2d channel/kernel geometry is recovered from the weight shape
//! (out_channels, in_channels, kernel, kernel); Dense features from
//! (out_features, in_features).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Layer, Network};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DLAB";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_DENSE: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DROPOUT: u8 = 5;

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);
    read_network(&mut r)
}

pub fn write_network<W: Write>(net: &Network, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(net.layers().len() as u32)?;
    for layer in net.layers() {
        match layer {
            Layer::Conv2d(c) => {
                w.write_u8(TAG_CONV)?;
                w.write_u32::<LittleEndian>(c.stride as u32)?;
                w.write_u32::<LittleEndian>(c.padding as u32)?;
                write_tensor(&c.weight, w)?;
                write_tensor(&c.bias, w)?;
            }
            Layer::Dense(d) => {
                w.write_u8(TAG_DENSE)?;
                write_tensor(&d.weight, w)?;
                write_tensor(&d.bias, w)?;
            }
            Layer::ReLU => w.write_u8(TAG_RELU)?,
            Layer::MaxPool2d { window } => {
                w.write_u8(TAG_MAXPOOL)?;
                w.write_u32::<LittleEndian>(*window as u32)?;
            }
            Layer::Flatten => w.write_u8(TAG_FLATTEN)?,
            Layer::Dropout { rate } => {
                w.write_u8(TAG_DROPOUT)?;
                w.write_f64::<LittleEndian>(*rate)?;
            }
        }
    }
    Ok(())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Data("checkpoint too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "bad checkpoint magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(MAGIC),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version: expected {}, found {}",
            VERSION, version
        )));
    }
    let layer_count = r.read_u32::<LittleEndian>()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for idx in 0..layer_count {
        let tag = r.read_u8()?;
        let layer = match tag {
            TAG_CONV => {
                let stride = r.read_u32::<LittleEndian>()? as usize;
                let padding = r.read_u32::<LittleEndian>()? as usize;
                let weight = read_tensor(r)?;
                let bias = read_tensor(r)?;
                if weight.shape().len() != 4 || weight.shape()[2] != weight.shape()[3] {
                    return Err(Error::Data(format!(
                        "layer {}: conv weight shape {:?} is not (oc, ic, k, k)",
                        idx,
                        weight.shape()
                    )));
                }
                Layer::Conv2d(Conv2d {
                    out_channels: weight.shape()[0],
                    in_channels: weight.shape()[1],
                    kernel: weight.shape()[2],
                    stride,
                    padding,
                    weight,
                    bias,
                })
            }
            TAG_DENSE => {
                let weight = read_tensor(r)?;
                let bias = read_tensor(r)?;
                if weight.shape().len() != 2 {
                    return Err(Error::Data(format!(
                        "layer {}: dense weight shape {:?} is not 2-D",
                        idx,
                        weight.shape()
                    )));
                }
                Layer::Dense(Dense {
                    out_features: weight.shape()[0],
                    in_features: weight.shape()[1],
                    weight,
                    bias,
                })
            }
            TAG_RELU => Layer::ReLU,
            TAG_MAXPOOL => Layer::MaxPool2d {
                window: r.read_u32::<LittleEndian>()? as usize,
            },
            TAG_FLATTEN => Layer::Flatten,
            TAG_DROPOUT => Layer::Dropout {
                rate: r.read_f64::<LittleEndian>()?,
            },
            other => {
                return Err(Error::Data(format!(
                    "layer {}: unknown layer tag {}",
                    idx, other
                )))
            }
        };
        layers.push(layer);
    }
    Ok(Network::new(layers))
}

fn write_tensor<W: Write>(t: &Tensor, w: &mut W) -> Result<()> {
    w.write_u32::<LittleEndian>(t.shape().len() as u32)?;
    for &d in t.shape() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    for &v in t.data() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let ndim = r.read_u32::<LittleEndian>()? as usize;
    if ndim > 8 {
        return Err(Error::Data(format!("implausible tensor rank {}", ndim)));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = vec![0.0; numel];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Tensor::new(shape, data).map_err(|e| Error::Data(format!("bad tensor in checkpoint: {}", e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init;
    use crate::seed;

    fn sample_net() -> Network {
        let mut net = Network::new(vec![
            Layer::Conv2d(Conv2d::new(1, 3, 3, 1, 1)),
            Layer::ReLU,
            Layer::Dropout { rate: 0.25 },
            Layer::MaxPool2d { window: 2 },
            Layer::Flatten,
            Layer::Dense(Dense::new(3 * 14 * 14, 10)),
        ]);
        init::init_network(&mut net, seed::derive(77, "init"));
        net
    }

    #[test]
    fn round_trip_preserves_layers_and_weights() {
        let net = sample_net();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let loaded = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.layers().len(), net.layers().len());
        for (a, b) in net.layers().iter().zip(loaded.layers()) {
            match (a, b) {
                (Layer::Conv2d(x), Layer::Conv2d(y)) => {
                    assert_eq!(x.stride, y.stride);
                    assert_eq!(x.padding, y.padding);
                    assert_eq!(x.weight.data(), y.weight.data());
                    assert_eq!(x.bias.data(), y.bias.data());
                }
                (Layer::Dense(x), Layer::Dense(y)) => {
                    assert_eq!(x.weight.data(), y.weight.data());
                }
                (Layer::Dropout { rate: x }, Layer::Dropout { rate: y }) => assert_eq!(x, y),
                (Layer::MaxPool2d { window: x }, Layer::MaxPool2d { window: y }) => {
                    assert_eq!(x, y)
                }
                (Layer::ReLU, Layer::ReLU) | (Layer::Flatten, Layer::Flatten) => {}
                other => panic!("layer kind changed in round trip: {:?}", other),
            }
        }
    }

    #[test]
    fn rejects_bad_magic_naming_both() {
        let mut buf = Vec::new();
        write_network(&sample_net(), &mut buf).unwrap();
        buf[0] = b'X';
        match read_network(&mut buf.as_slice()) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("DLAB"), "message should name expected magic: {}", msg);
                assert!(msg.contains("XLAB"), "message should name found magic: {}", msg);
            }
            other => panic!("expected data error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_future_version() {
        let mut buf = Vec::new();
        write_network(&sample_net(), &mut buf).unwrap();
        buf[4] = 9;
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(Error::Data(_))
        ));
    }
}
