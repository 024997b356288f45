//! 2-D convolution (cross-correlation) forward and backward.
//!
//! Layout is channels-last throughout: inputs `[H, W, Cin]`, kernels
//! `[kh, kw, Cin, Cout]`, outputs `[H', W', Cout]`. The kernel is applied
//! without flipping, the universal convention in this model family.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{LayerGrad, Scalar, Tensor};

/// Spatial padding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output keeps the input's height and width. An even
    /// total pad splits floor-left/ceil-right (and floor-top/ceil-bottom).
    Same,
    /// No padding; output shrinks to `H - kh + 1` by `W - kw + 1`.
    Valid,
}

/// Output height/width and top/left pad for a conv over `(h, w)`.
pub fn conv_output_geometry(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    padding: Padding,
) -> (usize, usize, usize, usize) {
    match padding {
        Padding::Same => (h, w, (kh - 1) / 2, (kw - 1) / 2),
        Padding::Valid => (h - kh + 1, w - kw + 1, 0, 0),
    }
}

struct ConvDims {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

fn check_dims<E: Scalar>(
    input: &Tensor<E>,
    kernels: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    padding: Padding,
) -> Result<ConvDims> {
    if input.rank() != 3 {
        return Err(Error::shape("conv2d input", &[0, 0, 0], input.shape()));
    }
    if kernels.rank() != 4 {
        return Err(Error::shape("conv2d kernels", &[0, 0, 0, 0], kernels.shape()));
    }
    let (h, w, cin) = (input.dim(0), input.dim(1), input.dim(2));
    let (kh, kw, kcin, cout) = (
        kernels.dim(0),
        kernels.dim(1),
        kernels.dim(2),
        kernels.dim(3),
    );
    if kcin != cin {
        return Err(Error::shape(
            "conv2d kernel input channels",
            &[kh, kw, cin, cout],
            kernels.shape(),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv2d bias", &[cout], b.shape()));
        }
    }
    if padding == Padding::Valid && (kh > h || kw > w) {
        return Err(Error::InvalidArgument(format!(
            "conv2d: kernel {kh}x{kw} larger than input {h}x{w} under valid padding"
        )));
    }
    let (out_h, out_w, pad_top, pad_left) = conv_output_geometry(h, w, kh, kw, padding);
    Ok(ConvDims {
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        out_h,
        out_w,
        pad_top,
        pad_left,
    })
}

/// One output row. Accumulation order per output element is fixed
/// (ky, kx, ci ascending) so row-parallel and sequential runs agree bitwise.
#[allow(clippy::too_many_arguments)]
fn conv_row_into<E: Scalar>(
    input: &[E],
    d: &ConvDims,
    kernels: &[E],
    bias: &[E],
    oy: usize,
    row: &mut [E],
) {
    for ox in 0..d.out_w {
        row[ox * d.cout..(ox + 1) * d.cout].copy_from_slice(bias);
    }
    for ky in 0..d.kh {
        let iy = (oy + ky) as isize - d.pad_top as isize;
        if iy < 0 || iy >= d.h as isize {
            continue;
        }
        let in_row = &input[iy as usize * d.w * d.cin..][..d.w * d.cin];
        let k_ky = &kernels[ky * d.kw * d.cin * d.cout..][..d.kw * d.cin * d.cout];
        for ox in 0..d.out_w {
            let acc = &mut row[ox * d.cout..][..d.cout];
            for kx in 0..d.kw {
                let ix = (ox + kx) as isize - d.pad_left as isize;
                if ix < 0 || ix >= d.w as isize {
                    continue;
                }
                let px = &in_row[ix as usize * d.cin..][..d.cin];
                let k_px = &k_ky[kx * d.cin * d.cout..][..d.cin * d.cout];
                for (ci, &v) in px.iter().enumerate() {
                    let k_row = &k_px[ci * d.cout..][..d.cout];
                    for (a, &k) in acc.iter_mut().zip(k_row) {
                        *a += v * k;
                    }
                }
            }
        }
    }
}

fn dims_for<E: Scalar>(
    h: usize,
    w: usize,
    cin: usize,
    kernels: &Tensor<E>,
    padding: Padding,
) -> ConvDims {
    let (kh, kw, cout) = (kernels.dim(0), kernels.dim(1), kernels.dim(3));
    let (out_h, out_w, pad_top, pad_left) = conv_output_geometry(h, w, kh, kw, padding);
    ConvDims {
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        out_h,
        out_w,
        pad_top,
        pad_left,
    }
}

/// Batched forward, one sample per task; each sample's rows run in the same
/// order as the row-parallel single-sample path.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward_batch<E: Scalar>(
    inputs: &[E],
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernels: &Tensor<E>,
    bias: &Tensor<E>,
    padding: Padding,
) -> (Vec<E>, usize, usize) {
    let d = dims_for(h, w, cin, kernels, padding);
    let sample_in = h * w * cin;
    let sample_out = d.out_h * d.out_w * d.cout;
    let mut out = vec![E::ZERO; batch * sample_out];
    par::for_each_chunk_mut(&mut out, sample_out, |b, sample| {
        let input = &inputs[b * sample_in..][..sample_in];
        for (oy, row) in sample.chunks_mut(d.out_w * d.cout).enumerate() {
            conv_row_into(input, &d, kernels.data(), bias.data(), oy, row);
        }
    });
    (out, d.out_h, d.out_w)
}

/// Batched gradient w.r.t. the inputs.
pub(crate) fn conv_input_grads_batch<E: Scalar>(
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernels: &Tensor<E>,
    padding: Padding,
    output_grads: &[E],
) -> Vec<E> {
    let d = dims_for(h, w, cin, kernels, padding);
    let sample_in = h * w * cin;
    let sample_out = d.out_h * d.out_w * d.cout;
    let mut grads = vec![E::ZERO; batch * sample_in];
    par::for_each_chunk_mut(&mut grads, sample_in, |b, sample| {
        let og = &output_grads[b * sample_out..][..sample_out];
        for (iy, row) in sample.chunks_mut(w * cin).enumerate() {
            input_grad_row_into(&d, kernels.data(), og, iy, row);
        }
    });
    grads
}

/// Batched gradients w.r.t. kernels and bias, accumulated over the batch in
/// sample order (one ky slab per task, so the accumulation order per kernel
/// element never depends on thread count).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_param_grads_batch<E: Scalar>(
    inputs: &[E],
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernels: &Tensor<E>,
    padding: Padding,
    output_grads: &[E],
) -> (Tensor<E>, Tensor<E>) {
    let d = dims_for(h, w, cin, kernels, padding);
    let sample_in = h * w * cin;
    let sample_out = d.out_h * d.out_w * d.cout;

    let mut bias_grad = Tensor::zeros(&[d.cout]);
    let bg = bias_grad.data_mut();
    for px in output_grads.chunks_exact(d.cout) {
        for (b, &g) in bg.iter_mut().zip(px) {
            *b += g;
        }
    }

    let mut kernel_grad = Tensor::zeros(&[d.kh, d.kw, d.cin, d.cout]);
    let slab = d.kw * d.cin * d.cout;
    par::for_each_chunk_mut(kernel_grad.data_mut(), slab, |ky, kg_ky| {
        for b in 0..batch {
            let input = &inputs[b * sample_in..][..sample_in];
            let og = &output_grads[b * sample_out..][..sample_out];
            for oy in 0..d.out_h {
                let iy = (oy + ky) as isize - d.pad_top as isize;
                if iy < 0 || iy >= d.h as isize {
                    continue;
                }
                let in_row = &input[iy as usize * d.w * d.cin..][..d.w * d.cin];
                let og_row = &og[oy * d.out_w * d.cout..][..d.out_w * d.cout];
                for ox in 0..d.out_w {
                    let og_px = &og_row[ox * d.cout..][..d.cout];
                    for kx in 0..d.kw {
                        let ix = (ox + kx) as isize - d.pad_left as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let in_px = &in_row[ix as usize * d.cin..][..d.cin];
                        let kg_px = &mut kg_ky[kx * d.cin * d.cout..][..d.cin * d.cout];
                        for (ci, &v) in in_px.iter().enumerate() {
                            let kg_row = &mut kg_px[ci * d.cout..][..d.cout];
                            for (kg, &g) in kg_row.iter_mut().zip(og_px) {
                                *kg += v * g;
                            }
                        }
                    }
                }
            }
        }
    });

    (kernel_grad, bias_grad)
}

/// Cross-correlates `input` with `kernels` and adds `bias`.
pub fn conv2d<E: Scalar>(
    input: &Tensor<E>,
    kernels: &Tensor<E>,
    bias: &Tensor<E>,
    padding: Padding,
) -> Result<Tensor<E>> {
    let d = check_dims(input, kernels, Some(bias), padding)?;
    let mut out = Tensor::zeros(&[d.out_h, d.out_w, d.cout]);
    let row_len = d.out_w * d.cout;
    par::for_each_chunk_mut(out.data_mut(), row_len, |oy, row| {
        conv_row_into(input.data(), &d, kernels.data(), bias.data(), oy, row)
    });
    Ok(out)
}

/// Gradient of one input row under the gather formulation
/// `d input[iy,ix,ci] = sum over (ky,kx,co) of k[ky,kx,ci,co] * d out[oy,ox,co]`.
fn input_grad_row_into<E: Scalar>(
    d: &ConvDims,
    kernels: &[E],
    output_grad: &[E],
    iy: usize,
    ig_row: &mut [E],
) {
    for ky in 0..d.kh {
        let oy = iy + d.pad_top;
        if oy < ky || oy - ky >= d.out_h {
            continue;
        }
        let oy = oy - ky;
        let og_row = &output_grad[oy * d.out_w * d.cout..][..d.out_w * d.cout];
        let k_ky = &kernels[ky * d.kw * d.cin * d.cout..][..d.kw * d.cin * d.cout];
        for ix in 0..d.w {
            let ig_px = &mut ig_row[ix * d.cin..][..d.cin];
            for kx in 0..d.kw {
                let ox = ix + d.pad_left;
                if ox < kx || ox - kx >= d.out_w {
                    continue;
                }
                let ox = ox - kx;
                let og_px = &og_row[ox * d.cout..][..d.cout];
                let k_px = &k_ky[kx * d.cin * d.cout..][..d.cin * d.cout];
                for (ci, g) in ig_px.iter_mut().enumerate() {
                    let k_row = &k_px[ci * d.cout..][..d.cout];
                    let mut acc = E::ZERO;
                    for (&k, &og) in k_row.iter().zip(og_px) {
                        acc += k * og;
                    }
                    *g += acc;
                }
            }
        }
    }
}

/// Exact analytic gradients of [`conv2d`] with respect to input, kernels,
/// and bias. Parameter gradients are named `"kernels"` and `"bias"`.
pub fn conv2d_backward<E: Scalar>(
    input: &Tensor<E>,
    kernels: &Tensor<E>,
    output_grad: &Tensor<E>,
    padding: Padding,
) -> Result<LayerGrad<E>> {
    let d = check_dims(input, kernels, None, padding)?;
    let expected = [d.out_h, d.out_w, d.cout];
    if output_grad.shape() != expected {
        return Err(Error::shape(
            "conv2d output_grad",
            &expected,
            output_grad.shape(),
        ));
    }

    let og = output_grad.data();

    let mut bias_grad = Tensor::zeros(&[d.cout]);
    let bg = bias_grad.data_mut();
    for px in og.chunks_exact(d.cout) {
        for (b, &g) in bg.iter_mut().zip(px) {
            *b += g;
        }
    }

    // Kernel gradients: one ky slab per task, scatter-free inside.
    let mut kernel_grad = Tensor::zeros(&[d.kh, d.kw, d.cin, d.cout]);
    let slab = d.kw * d.cin * d.cout;
    par::for_each_chunk_mut(kernel_grad.data_mut(), slab, |ky, kg_ky| {
        for oy in 0..d.out_h {
            let iy = (oy + ky) as isize - d.pad_top as isize;
            if iy < 0 || iy >= d.h as isize {
                continue;
            }
            let in_row = &input.data()[iy as usize * d.w * d.cin..][..d.w * d.cin];
            let og_row = &og[oy * d.out_w * d.cout..][..d.out_w * d.cout];
            for ox in 0..d.out_w {
                let og_px = &og_row[ox * d.cout..][..d.cout];
                for kx in 0..d.kw {
                    let ix = (ox + kx) as isize - d.pad_left as isize;
                    if ix < 0 || ix >= d.w as isize {
                        continue;
                    }
                    let in_px = &in_row[ix as usize * d.cin..][..d.cin];
                    let kg_px = &mut kg_ky[kx * d.cin * d.cout..][..d.cin * d.cout];
                    for (ci, &v) in in_px.iter().enumerate() {
                        let kg_row = &mut kg_px[ci * d.cout..][..d.cout];
                        for (kg, &g) in kg_row.iter_mut().zip(og_px) {
                            *kg += v * g;
                        }
                    }
                }
            }
        }
    });

    let mut input_grad = Tensor::zeros(&[d.h, d.w, d.cin]);
    let row_len = d.w * d.cin;
    par::for_each_chunk_mut(input_grad.data_mut(), row_len, |iy, row| {
        input_grad_row_into(&d, kernels.data(), og, iy, row)
    });

    Ok(LayerGrad::new(input_grad)
        .with_param("kernels", kernel_grad)
        .with_param("bias", bias_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    /// Independent oracle: explicit zero-padded sliding window, quadruple
    /// loop, no shared code with the implementation above.
    fn conv_oracle(
        input: &Tensor<f64>,
        kernels: &Tensor<f64>,
        bias: &Tensor<f64>,
        padding: Padding,
    ) -> Tensor<f64> {
        let (h, w, cin) = (input.dim(0), input.dim(1), input.dim(2));
        let (kh, kw, cout) = (kernels.dim(0), kernels.dim(1), kernels.dim(3));
        let (out_h, out_w, pt, pl) = conv_output_geometry(h, w, kh, kw, padding);
        let mut out = Tensor::zeros(&[out_h, out_w, cout]);
        for oy in 0..out_h {
            for ox in 0..out_w {
                for co in 0..cout {
                    let mut acc = bias.at(&[co]);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize + ky as isize - pt as isize;
                            let ix = ox as isize + kx as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += input.at(&[iy as usize, ix as usize, ci])
                                    * kernels.at(&[ky, kx, ci, co]);
                            }
                        }
                    }
                    out.set(&[oy, ox, co], acc);
                }
            }
        }
        out
    }

    fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor<f64> {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let input = Tensor::<f32>::full(&[3, 3, 1], 1.0);
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0f32]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[3, 3, 1]);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn all_ones_window_sums() {
        // 3x3 ones, 2x2 ones kernel, valid: every output is the window sum 4.
        let input = Tensor::<f32>::full(&[3, 3, 1], 1.0);
        let kernel = Tensor::full(&[2, 2, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert!(out.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn matches_oracle_on_random_inputs() {
        let mut rng = RngState::new(11);
        for &padding in &[Padding::Same, Padding::Valid] {
            let input = random_tensor(&[6, 5, 3], &mut rng);
            let kernels = random_tensor(&[3, 3, 3, 4], &mut rng);
            let bias = random_tensor(&[4], &mut rng);
            let got = conv2d(&input, &kernels, &bias, padding).unwrap();
            let want = conv_oracle(&input, &kernels, &bias, padding);
            assert_eq!(got.shape(), want.shape());
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn paper_input_shape_270() {
        let input = Tensor::<f32>::zeros(&[270, 270, 1]);
        let kernels = Tensor::zeros(&[3, 3, 1, 16]);
        let bias = Tensor::zeros(&[16]);
        let out = conv2d(&input, &kernels, &bias, Padding::Same).unwrap();
        assert_eq!(out.shape(), &[270, 270, 16]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let input = Tensor::<f32>::zeros(&[4, 4, 2]);
        let kernels = Tensor::zeros(&[3, 3, 3, 4]);
        let bias = Tensor::zeros(&[4]);
        let err = conv2d(&input, &kernels, &bias, Padding::Same).unwrap_err();
        match err {
            Error::ShapeMismatch { expected, actual, .. } => {
                assert_eq!(expected, vec![3, 3, 2, 4]);
                assert_eq!(actual, vec![3, 3, 3, 4]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn backward_zero_grad_is_zero() {
        let mut rng = RngState::new(5);
        let input = random_tensor(&[4, 4, 2], &mut rng);
        let kernels = random_tensor(&[3, 3, 2, 3], &mut rng);
        let og = Tensor::zeros(&[4, 4, 3]);
        let grads = conv2d_backward(&input, &kernels, &og, Padding::Same).unwrap();
        assert!(grads.input_grad.iter().all(|&v| v == 0.0));
        assert!(grads.param("kernels").unwrap().iter().all(|&v| v == 0.0));
        assert!(grads.param("bias").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_identity_kernel_passes_grad_through() {
        let input = Tensor::<f32>::full(&[3, 3, 1], 0.5);
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0f32]).unwrap();
        let mut rng = RngState::new(2);
        let og_data: Vec<f32> = (0..9).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let og = Tensor::new(vec![3, 3, 1], og_data).unwrap();
        let grads = conv2d_backward(&input, &kernel, &og, Padding::Valid).unwrap();
        assert_eq!(grads.input_grad.data(), og.data());
    }

    #[test]
    fn backward_matches_finite_differences() {
        use crate::ops::finite_diff_check;

        let mut rng = RngState::new(17);
        let input = random_tensor(&[5, 5, 1], &mut rng);
        let kernels = random_tensor(&[3, 3, 1, 2], &mut rng);
        let bias = random_tensor(&[2], &mut rng);

        for &padding in &[Padding::Same, Padding::Valid] {
            // Scalar objective: sum of outputs. Its gradient w.r.t. the
            // output is all-ones, so backward(ones) must match finite
            // differences of the summed forward pass.
            let (out_h, out_w, _, _) = conv_output_geometry(5, 5, 3, 3, padding);
            let ones = Tensor::full(&[out_h, out_w, 2], 1.0);
            let grads = conv2d_backward(&input, &kernels, &ones, padding).unwrap();

            let f_input = |x: &[f64]| {
                let t = Tensor::new(vec![5, 5, 1], x.to_vec()).unwrap();
                conv2d(&t, &kernels, &bias, padding)
                    .unwrap()
                    .iter()
                    .sum::<f64>()
            };
            let report = finite_diff_check(
                f_input,
                input.data(),
                grads.input_grad.data(),
                1e-5,
                1e-4,
            );
            assert!(report.passed(), "input grad: {report:?}");

            let f_kernels = |x: &[f64]| {
                let k = Tensor::new(vec![3, 3, 1, 2], x.to_vec()).unwrap();
                conv2d(&input, &k, &bias, padding)
                    .unwrap()
                    .iter()
                    .sum::<f64>()
            };
            let report = finite_diff_check(
                f_kernels,
                kernels.data(),
                grads.param("kernels").unwrap().data(),
                1e-5,
                1e-4,
            );
            assert!(report.passed(), "kernel grad: {report:?}");

            let f_bias = |x: &[f64]| {
                let b = Tensor::from_slice(x);
                conv2d(&input, &kernels, &b, padding)
                    .unwrap()
                    .iter()
                    .sum::<f64>()
            };
            let report = finite_diff_check(
                f_bias,
                bias.data(),
                grads.param("bias").unwrap().data(),
                1e-5,
                1e-4,
            );
            assert!(report.passed(), "bias grad: {report:?}");
        }
    }

    /// The batched wrappers agree with composing the public single-sample
    /// ops sample by sample.
    #[test]
    fn batched_paths_match_per_sample_ops() {
        let mut rng = RngState::new(61);
        let batch = 3;
        let (h, w, cin, cout) = (6, 5, 2, 4);
        let samples: Vec<Tensor<f64>> = (0..batch)
            .map(|_| random_tensor(&[h, w, cin], &mut rng))
            .collect();
        let kernels = random_tensor(&[3, 3, cin, cout], &mut rng);
        let bias = random_tensor(&[cout], &mut rng);
        let padding = Padding::Same;

        let mut inputs = Vec::new();
        for s in &samples {
            inputs.extend_from_slice(s.data());
        }
        let (out, oh, ow) = conv_forward_batch(&inputs, batch, h, w, cin, &kernels, &bias, padding);
        let sample_out = oh * ow * cout;
        for (b, s) in samples.iter().enumerate() {
            let single = conv2d(s, &kernels, &bias, padding).unwrap();
            assert_eq!(&out[b * sample_out..(b + 1) * sample_out], single.data());
        }

        let og_samples: Vec<Tensor<f64>> = (0..batch)
            .map(|_| random_tensor(&[oh, ow, cout], &mut rng))
            .collect();
        let mut ogs = Vec::new();
        for s in &og_samples {
            ogs.extend_from_slice(s.data());
        }

        let ig = conv_input_grads_batch(batch, h, w, cin, &kernels, padding, &ogs);
        let (kg, bg) = conv_param_grads_batch(&inputs, batch, h, w, cin, &kernels, padding, &ogs);

        let mut kg_sum = Tensor::<f64>::zeros(&[3, 3, cin, cout]);
        let mut bg_sum = Tensor::<f64>::zeros(&[cout]);
        let sample_in = h * w * cin;
        for (b, (s, og)) in samples.iter().zip(&og_samples).enumerate() {
            let g = conv2d_backward(s, &kernels, og, padding).unwrap();
            assert_eq!(&ig[b * sample_in..(b + 1) * sample_in], g.input_grad.data());
            for (acc, &v) in kg_sum.data_mut().iter_mut().zip(g.param("kernels").unwrap().iter()) {
                *acc += v;
            }
            for (acc, &v) in bg_sum.data_mut().iter_mut().zip(g.param("bias").unwrap().iter()) {
                *acc += v;
            }
        }
        for (a, b) in kg.iter().zip(kg_sum.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        for (a, b) in bg.iter().zip(bg_sum.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_in_input_and_kernels() {
        let mut rng = RngState::new(23);
        for _ in 0..5 {
            let input = random_tensor(&[5, 4, 2], &mut rng);
            let kernels = random_tensor(&[3, 3, 2, 3], &mut rng);
            let zero_bias = Tensor::zeros(&[3]);
            let a = rng.uniform(-2.0, 2.0);

            let scaled_in = input.map(|v| v * a);
            let lhs = conv2d(&scaled_in, &kernels, &zero_bias, Padding::Same).unwrap();
            let rhs = conv2d(&input, &kernels, &zero_bias, Padding::Same).unwrap();
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                assert!((l - r * a).abs() < 1e-5);
            }
        }
    }
}
