//! Max pooling over square non-overlapping windows (stride = window).
//! Ties go to the first element in row-major window scan order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn output_shape(idx: usize, input: &[usize], window: usize) -> Result<Vec<usize>> {
    if input.len() != 4 {
        return Err(Error::shape(
            idx,
            format!("maxpool expects (n, c, h, w) input, got {:?}", input),
        ));
    }
    if window == 0 || input[2] < window || input[3] < window {
        return Err(Error::shape(
            idx,
            format!(
                "maxpool window {} does not fit {}x{} input",
                window, input[2], input[3]
            ),
        ));
    }
    Ok(vec![input[0], input[1], input[2] / window, input[3] / window])
}

pub fn forward(idx: usize, x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    let out_shape = output_shape(idx, x.shape(), window)?;
    let (n, c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let (ih, iw) = (x.shape()[2], x.shape()[3]);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.len()];
    let xd = x.data();
    let od = out.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let in_base = ((b * c) + ch) * ih * iw;
            let out_base = ((b * c) + ch) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = in_base + (oy * window) * iw + ox * window;
                    let mut best = xd[best_idx];
                    for wy in 0..window {
                        let row = in_base + (oy * window + wy) * iw + ox * window;
                        for wx in 0..window {
                            let v = xd[row + wx];
                            if v > best {
                                best = v;
                                best_idx = row + wx;
                            }
                        }
                    }
                    od[out_base + oy * ow + ox] = best;
                    argmax[out_base + oy * ow + ox] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_max_per_window() {
        let x = Tensor::new(
            vec![1, 1, 4, 4],
            vec![
                1.0, 2.0, 5.0, 6.0, //
                3.0, 4.0, 8.0, 7.0, //
                0.0, -1.0, 1.0, 1.0, //
                -2.0, -3.0, 1.0, 2.0,
            ],
        )
        .unwrap();
        let (y, argmax) = forward(0, &x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4.0, 8.0, 0.0, 2.0]);
        assert_eq!(argmax, vec![5, 6, 8, 15]);
    }

    #[test]
    fn tie_breaks_to_first_in_scan_order() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let (_, argmax) = forward(0, &x, 2).unwrap();
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn truncates_ragged_edges() {
        let x = Tensor::zeros(vec![1, 1, 5, 5]);
        let (y, _) = forward(0, &x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
    }
}
