//! 2-D convolution with zero padding and per-layer stride.
//!
//! Tensors are NCHW. The loops hoist the valid output-column range out of
//! the innermost loop so padding costs no per-element branch and the inner
//! accumulation vectorizes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ParamGrads;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Shape (out_channels, in_channels, kernel, kernel).
    pub weight: Tensor,
    /// Shape (out_channels,).
    pub bias: Tensor,
}

impl Conv2d {
    /// Zero-initialized parameters; call `init::init_network` to seed them.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Tensor::zeros(vec![out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(vec![out_channels]),
        }
    }

    pub fn output_shape(&self, idx: usize, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 4 {
            return Err(Error::shape(
                idx,
                format!("conv expects (n, c, h, w) input, got {:?}", input),
            ));
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        if c != self.in_channels {
            return Err(Error::shape(
                idx,
                format!("conv expects {} input channels, got {}", self.in_channels, c),
            ));
        }
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape(
                idx,
                format!(
                    "conv kernel {} does not fit {}x{} input with padding {}",
                    self.kernel, h, w, self.padding
                ),
            ));
        }
        let oh = (h + 2 * self.padding - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        Ok(vec![n, self.out_channels, oh, ow])
    }

    /// Inclusive-exclusive range of output columns whose sampled input
    /// column `ox*stride + kx - padding` lies inside `[0, iw)`.
    #[inline]
    fn valid_ox(&self, kx: usize, iw: usize, ow: usize) -> (usize, usize) {
        let lo = if kx >= self.padding {
            0
        } else {
            (self.padding - kx).div_ceil(self.stride)
        };
        let max_in = iw + self.padding;
        if max_in <= kx {
            return (0, 0);
        }
        let hi = ((max_in - 1 - kx) / self.stride + 1).min(ow);
        (lo.min(hi), hi)
    }

    pub fn forward(&self, idx: usize, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(idx, x.shape())?;
        let (n, oc, oh, ow) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
        let (ic, ih, iw) = (x.shape()[1], x.shape()[2], x.shape()[3]);
        let k = self.kernel;
        let mut out = Tensor::zeros(out_shape.clone());

        let xd = x.data();
        let wd = self.weight.data();
        let od = out.data_mut();
        for b in 0..n {
            for o in 0..oc {
                let out_base = ((b * oc) + o) * oh * ow;
                od[out_base..out_base + oh * ow].fill(self.bias.data()[o]);
                for i in 0..ic {
                    let in_base = ((b * ic) + i) * ih * iw;
                    let w_base = ((o * ic) + i) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let w = wd[w_base + ky * k + kx];
                            if w == 0.0 {
                                continue;
                            }
                            let (lo, hi) = self.valid_ox(kx, iw, ow);
                            for oy in 0..oh {
                                let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                                if iy < 0 || iy >= ih as isize {
                                    continue;
                                }
                                let in_row = in_base + iy as usize * iw;
                                let out_row = out_base + oy * ow;
                                let x_off =
                                    in_row as isize + kx as isize - self.padding as isize;
                                for ox in lo..hi {
                                    od[out_row + ox] +=
                                        w * xd[(x_off + (ox * self.stride) as isize) as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Input, weight, and bias gradients for the cached input and upstream
    /// gradient. Shapes were validated on the forward pass.
    pub fn backward(&self, x: &Tensor, dout: &Tensor) -> (Tensor, ParamGrads) {
        let (n, ic, ih, iw) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oc, oh, ow) = (dout.shape()[1], dout.shape()[2], dout.shape()[3]);
        let k = self.kernel;

        let mut dx = Tensor::zeros(x.shape().to_vec());
        let mut dw = Tensor::zeros(self.weight.shape().to_vec());
        let mut db = Tensor::zeros(self.bias.shape().to_vec());

        let xd = x.data();
        let dd = dout.data();
        let wd = self.weight.data();
        {
            let dbd = db.data_mut();
            for b in 0..n {
                for o in 0..oc {
                    let base = ((b * oc) + o) * oh * ow;
                    let mut acc = 0.0;
                    for v in &dd[base..base + oh * ow] {
                        acc += v;
                    }
                    dbd[o] += acc;
                }
            }
        }

        let dwd = dw.data_mut();
        let dxd = dx.data_mut();
        for b in 0..n {
            for o in 0..oc {
                let out_base = ((b * oc) + o) * oh * ow;
                for i in 0..ic {
                    let in_base = ((b * ic) + i) * ih * iw;
                    let w_base = ((o * ic) + i) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let (lo, hi) = self.valid_ox(kx, iw, ow);
                            if lo >= hi {
                                continue;
                            }
                            let w = wd[w_base + ky * k + kx];
                            let mut wacc = 0.0;
                            for oy in 0..oh {
                                let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                                if iy < 0 || iy >= ih as isize {
                                    continue;
                                }
                                let in_row = in_base + iy as usize * iw;
                                let out_row = out_base + oy * ow;
                                let x_off =
                                    in_row as isize + kx as isize - self.padding as isize;
                                if self.stride == 1 {
                                    let xs = &xd[(x_off + lo as isize) as usize..];
                                    let ds = &dd[out_row + lo..out_row + hi];
                                    for (j, g) in ds.iter().enumerate() {
                                        wacc += g * xs[j];
                                    }
                                    let dxs = &mut dxd[(x_off + lo as isize) as usize..];
                                    for (j, g) in ds.iter().enumerate() {
                                        dxs[j] += w * g;
                                    }
                                } else {
                                    for ox in lo..hi {
                                        let xi = (x_off + (ox * self.stride) as isize) as usize;
                                        let g = dd[out_row + ox];
                                        wacc += g * xd[xi];
                                        dxd[xi] += w * g;
                                    }
                                }
                            }
                            dwd[w_base + ky * k + kx] += wacc;
                        }
                    }
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_kernel_scales_input() {
        // 1x1 conv with kernel value 2 doubles every element.
        let mut conv = Conv2d::new(1, 1, 1, 1, 0);
        conv.weight.data_mut()[0] = 2.0;
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(0, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn hand_computed_3x3_valid_convolution() {
        // 3x3 input, 2x2 kernel, stride 1, no padding; oracle computed by
        // direct summation over each window.
        let x = Tensor::new(
            vec![1, 1, 3, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let mut conv = Conv2d::new(1, 1, 2, 1, 0);
        conv.weight
            .data_mut()
            .copy_from_slice(&[1.0, 0.5, -1.0, 2.0]);
        conv.bias.data_mut()[0] = 0.25;
        let y = conv.forward(0, &x).unwrap();
        let expect = |a: f64, b: f64, c: f64, d: f64| a + 0.5 * b - c + 2.0 * d + 0.25;
        assert_eq!(
            y.data(),
            &[
                expect(1.0, 2.0, 4.0, 5.0),
                expect(2.0, 3.0, 5.0, 6.0),
                expect(4.0, 5.0, 7.0, 8.0),
                expect(5.0, 6.0, 8.0, 9.0),
            ]
        );
    }

    #[test]
    fn padding_and_stride_shapes() {
        let conv = Conv2d::new(3, 8, 3, 1, 1);
        assert_eq!(
            conv.output_shape(0, &[2, 3, 32, 32]).unwrap(),
            vec![2, 8, 32, 32]
        );
        let conv = Conv2d::new(1, 6, 5, 1, 0);
        assert_eq!(
            conv.output_shape(0, &[4, 1, 28, 28]).unwrap(),
            vec![4, 6, 24, 24]
        );
        let strided = Conv2d::new(1, 1, 3, 2, 1);
        assert_eq!(
            strided.output_shape(0, &[1, 1, 7, 7]).unwrap(),
            vec![1, 1, 4, 4]
        );
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let conv = Conv2d::new(3, 8, 3, 1, 1);
        assert!(conv.output_shape(2, &[1, 1, 32, 32]).is_err());
    }

    #[test]
    fn padded_forward_matches_explicit_zero_pad_oracle() {
        // Compare conv with padding=1 against conv(padding=0) on an input
        // that was zero-padded by hand.
        let vals: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| (i as f64) * 0.17 - 2.0).collect();
        let x = Tensor::new(vec![2, 2, 4, 4], vals.clone()).unwrap();
        let mut padded = Tensor::zeros(vec![2, 2, 6, 6]);
        for b in 0..2 {
            for c in 0..2 {
                for y in 0..4 {
                    for xx in 0..4 {
                        let src = ((b * 2 + c) * 4 + y) * 4 + xx;
                        let dst = ((b * 2 + c) * 6 + y + 1) * 6 + xx + 1;
                        padded.data_mut()[dst] = vals[src];
                    }
                }
            }
        }
        let mut conv_pad = Conv2d::new(2, 3, 3, 1, 1);
        let wvals: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.2).collect();
        conv_pad.weight.data_mut().copy_from_slice(&wvals);
        conv_pad.bias.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let mut conv_nopad = conv_pad.clone();
        conv_nopad.padding = 0;

        let y_pad = conv_pad.forward(0, &x).unwrap();
        let y_ref = conv_nopad.forward(0, &padded).unwrap();
        assert_eq!(y_pad.shape(), y_ref.shape());
        for (a, b) in y_pad.data().iter().zip(y_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
