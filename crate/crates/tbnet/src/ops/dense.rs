//! Fully connected (affine) layer.

use crate::error::{Error, Result};
use crate::tensor::{LayerGrad, Scalar, Tensor};

pub(crate) fn dense_sample_into<E: Scalar>(
    input: &[E],
    weights: &[E],
    bias: &[E],
    out: &mut [E],
) {
    let m = bias.len();
    out.copy_from_slice(bias);
    for (&x, w_row) in input.iter().zip(weights.chunks_exact(m)) {
        for (acc, &w) in out.iter_mut().zip(w_row) {
            *acc += x * w;
        }
    }
}

/// `input[n] . weights[n, m] + bias[m]`.
pub fn dense<E: Scalar>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    bias: &Tensor<E>,
) -> Result<Tensor<E>> {
    let n = input.len();
    if weights.rank() != 2 || weights.dim(0) != n {
        return Err(Error::shape(
            "dense weights",
            &[n, bias.len()],
            weights.shape(),
        ));
    }
    let m = weights.dim(1);
    if bias.shape() != [m] {
        return Err(Error::shape("dense bias", &[m], bias.shape()));
    }
    let mut out = Tensor::zeros(&[m]);
    dense_sample_into(input.data(), weights.data(), bias.data(), out.data_mut());
    Ok(out)
}

/// Gradients of [`dense`]: parameter gradients are named `"weights"` and
/// `"bias"`.
pub fn dense_backward<E: Scalar>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    output_grad: &Tensor<E>,
) -> Result<LayerGrad<E>> {
    let n = input.len();
    let m = weights.dim(1);
    if output_grad.len() != m {
        return Err(Error::shape("dense output_grad", &[m], output_grad.shape()));
    }
    let og = output_grad.data();

    let mut weight_grad = Tensor::zeros(&[n, m]);
    for (wg_row, &x) in weight_grad.data_mut().chunks_exact_mut(m).zip(input.iter()) {
        for (wg, &g) in wg_row.iter_mut().zip(og) {
            *wg = x * g;
        }
    }

    let mut input_grad = Tensor::zeros(&[n]);
    for (ig, w_row) in input_grad.data_mut().iter_mut().zip(weights.data().chunks_exact(m)) {
        let mut acc = E::ZERO;
        for (&w, &g) in w_row.iter().zip(og) {
            acc += w * g;
        }
        *ig = acc;
    }

    Ok(LayerGrad::new(input_grad)
        .with_param("weights", weight_grad)
        .with_param("bias", output_grad.clone()))
}
