//! 2x2 stride-2 max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Flat input index of the maximum per pooled output element; routes the
/// gradient in the backward pass.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Slice-level core shared by the public op and the batched model runner.
pub(crate) fn maxpool_sample_into<E: Scalar>(
    data: &[E],
    h: usize,
    w: usize,
    c: usize,
    out: &mut [E],
    argmax: &mut [usize],
) {
    let (out_h, out_w) = (h / 2, w / 2);
    for oy in 0..out_h {
        for ox in 0..out_w {
            for ch in 0..c {
                let mut best_idx = (2 * oy * w + 2 * ox) * c + ch;
                let mut best = data[best_idx];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let out_idx = (oy * out_w + ox) * c + ch;
                out[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
}

/// 2x2 window, stride 2, floor semantics: a trailing odd row or column is
/// dropped (270 -> 135 -> 67 -> 33 -> 16). Ties break to the lowest flat
/// index.
pub fn maxpool2d<E: Scalar>(input: &Tensor<E>) -> Result<(Tensor<E>, PoolIndices)> {
    if input.rank() != 3 {
        return Err(Error::shape("maxpool2d input", &[0, 0, 0], input.shape()));
    }
    let (h, w, c) = (input.dim(0), input.dim(1), input.dim(2));
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!(
            "maxpool2d: 2x2 window larger than input {h}x{w}"
        )));
    }
    let (out_h, out_w) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[out_h, out_w, c]);
    let mut argmax = vec![0usize; out_h * out_w * c];
    maxpool_sample_into(input.data(), h, w, c, out.data_mut(), &mut argmax);
    Ok((
        out,
        PoolIndices {
            input_shape: vec![h, w, c],
            argmax,
        },
    ))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool2d_backward<E: Scalar>(
    indices: &PoolIndices,
    output_grad: &Tensor<E>,
) -> Result<Tensor<E>> {
    if output_grad.len() != indices.argmax.len() {
        return Err(Error::shape(
            "maxpool2d_backward output_grad",
            &[indices.argmax.len()],
            output_grad.shape(),
        ));
    }
    let mut input_grad = Tensor::zeros(&indices.input_shape);
    let ig = input_grad.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(output_grad.iter()) {
        ig[idx] += g;
    }
    Ok(input_grad)
}

pub(crate) fn gap_sample_into<E: Scalar>(data: &[E], hw: usize, c: usize, out: &mut [E]) {
    for v in out.iter_mut() {
        *v = E::ZERO;
    }
    for px in data.chunks_exact(c) {
        for (acc, &v) in out.iter_mut().zip(px) {
            *acc += v;
        }
    }
    let inv = E::ONE / E::from_usize(hw);
    for v in out.iter_mut() {
        *v = *v * inv;
    }
}

/// Channel-wise spatial mean: `[H, W, C] -> [C]`.
pub fn global_average_pool<E: Scalar>(input: &Tensor<E>) -> Result<Tensor<E>> {
    if input.rank() != 3 {
        return Err(Error::shape("gap input", &[0, 0, 0], input.shape()));
    }
    let (h, w, c) = (input.dim(0), input.dim(1), input.dim(2));
    let mut out = Tensor::zeros(&[c]);
    gap_sample_into(input.data(), h * w, c, out.data_mut());
    Ok(out)
}

/// Spreads each channel gradient uniformly over its spatial positions.
pub fn global_average_pool_backward<E: Scalar>(
    output_grad: &Tensor<E>,
    input_shape: &[usize],
) -> Result<Tensor<E>> {
    let (h, w, c) = (input_shape[0], input_shape[1], input_shape[2]);
    if output_grad.shape() != [c] {
        return Err(Error::shape("gap output_grad", &[c], output_grad.shape()));
    }
    let inv = E::ONE / E::from_usize(h * w);
    let mut input_grad = Tensor::zeros(input_shape);
    for px in input_grad.data_mut().chunks_exact_mut(c) {
        for (g, &og) in px.iter_mut().zip(output_grad.iter()) {
            *g = og * inv;
        }
    }
    Ok(input_grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let input = Tensor::new(vec![2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = maxpool2d(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.at(&[0, 0, 0]), 4.0);
    }

    #[test]
    fn odd_dims_floor() {
        let input = Tensor::<f32>::zeros(&[135, 135, 2]);
        let (out, _) = maxpool2d(&input).unwrap();
        assert_eq!(out.shape(), &[67, 67, 2]);
    }

    #[test]
    fn constant_input_ties_route_to_first_index() {
        let input = Tensor::<f32>::full(&[4, 4, 1], 7.0);
        let (out, idx) = maxpool2d(&input).unwrap();
        assert!(out.iter().all(|&v| v == 7.0));
        // Lowest flat index of each window is its top-left corner.
        assert_eq!(idx.argmax, vec![0, 2, 8, 10]);

        let og = Tensor::full(&[2, 2, 1], 1.0f32);
        let ig = maxpool2d_backward(&idx, &og).unwrap();
        let expect_one = [0usize, 2, 8, 10];
        for (i, &v) in ig.iter().enumerate() {
            let want = if expect_one.contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(v, want);
        }
    }

    #[test]
    fn pooled_value_dominates_window() {
        let mut rng = crate::rng::RngState::new(31);
        let data: Vec<f32> = (0..6 * 6 * 3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let input = Tensor::new(vec![6, 6, 3], data).unwrap();
        let (out, _) = maxpool2d(&input).unwrap();
        for oy in 0..3 {
            for ox in 0..3 {
                for c in 0..3 {
                    let m = out.at(&[oy, ox, c]);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            assert!(m >= input.at(&[2 * oy + dy, 2 * ox + dx, c]));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn window_larger_than_input_errors() {
        let input = Tensor::<f32>::zeros(&[1, 4, 1]);
        assert!(maxpool2d(&input).is_err());
    }

    #[test]
    fn gap_constant_is_constant() {
        let input = Tensor::<f32>::full(&[5, 7, 3], 0.25);
        let out = global_average_pool(&input).unwrap();
        assert_eq!(out.shape(), &[3]);
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn gap_mean_oracle() {
        let input = Tensor::new(vec![2, 2, 1], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let out = global_average_pool(&input).unwrap();
        assert!((out.at(&[0]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gap_bottleneck_shape() {
        let input = Tensor::<f32>::zeros(&[16, 16, 1024]);
        let out = global_average_pool(&input).unwrap();
        assert_eq!(out.shape(), &[1024]);
    }

    #[test]
    fn gap_backward_spreads_uniformly() {
        let og = Tensor::from_slice(&[6.0f64, 12.0]);
        let ig = global_average_pool_backward(&og, &[2, 3, 2]).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert!((ig.at(&[y, x, 0]) - 1.0).abs() < 1e-12);
                assert!((ig.at(&[y, x, 1]) - 2.0).abs() < 1e-12);
            }
        }
    }
}
