//! Fully connected layer: y = x Wᵀ + b over a batch.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ParamGrads;

#[derive(Debug, Clone)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// Shape (out_features, in_features).
    pub weight: Tensor,
    /// Shape (out_features,).
    pub bias: Tensor,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Dense {
            in_features,
            out_features,
            weight: Tensor::zeros(vec![out_features, in_features]),
            bias: Tensor::zeros(vec![out_features]),
        }
    }

    pub fn output_shape(&self, idx: usize, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 {
            return Err(Error::shape(
                idx,
                format!("dense expects (n, features) input, got {:?}", input),
            ));
        }
        if input[1] != self.in_features {
            return Err(Error::shape(
                idx,
                format!(
                    "dense expects {} input features, got {}",
                    self.in_features, input[1]
                ),
            ));
        }
        Ok(vec![input[0], self.out_features])
    }

    pub fn forward(&self, idx: usize, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(idx, x.shape())?;
        let n = out_shape[0];
        let (fi, fo) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros(out_shape);
        let xd = x.data();
        let wd = self.weight.data();
        let bd = self.bias.data();
        let od = out.data_mut();
        for b in 0..n {
            let x_row = &xd[b * fi..(b + 1) * fi];
            let o_row = &mut od[b * fo..(b + 1) * fo];
            for o in 0..fo {
                let w_row = &wd[o * fi..(o + 1) * fi];
                let mut acc = bd[o];
                for (xv, wv) in x_row.iter().zip(w_row) {
                    acc += xv * wv;
                }
                o_row[o] = acc;
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor, dout: &Tensor) -> (Tensor, ParamGrads) {
        let n = x.shape()[0];
        let (fi, fo) = (self.in_features, self.out_features);
        let mut dx = Tensor::zeros(x.shape().to_vec());
        let mut dw = Tensor::zeros(self.weight.shape().to_vec());
        let mut db = Tensor::zeros(self.bias.shape().to_vec());

        let xd = x.data();
        let dd = dout.data();
        let wd = self.weight.data();
        let dxd = dx.data_mut();
        let dwd = dw.data_mut();
        let dbd = db.data_mut();
        for b in 0..n {
            let x_row = &xd[b * fi..(b + 1) * fi];
            let d_row = &dd[b * fo..(b + 1) * fo];
            let dx_row = &mut dxd[b * fi..(b + 1) * fi];
            for o in 0..fo {
                let g = d_row[o];
                dbd[o] += g;
                if g == 0.0 {
                    continue;
                }
                let w_row = &wd[o * fi..(o + 1) * fi];
                let dw_row = &mut dwd[o * fi..(o + 1) * fi];
                for i in 0..fi {
                    dw_row[i] += g * x_row[i];
                    dx_row[i] += g * w_row[i];
                }
            }
        }

        (
            dx,
            ParamGrads {
                weight: dw,
                bias: db,
            },
        )
    }
}
