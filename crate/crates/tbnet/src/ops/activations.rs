//! ReLU and softmax.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu<E: Scalar>(input: &Tensor<E>) -> Tensor<E> {
    input.map(|v| v.max(E::ZERO))
}

/// Passes gradient where the forward input was strictly positive; the
/// subgradient at exactly zero is taken as zero.
pub fn relu_backward<E: Scalar>(input: &Tensor<E>, output_grad: &Tensor<E>) -> Result<Tensor<E>> {
    if input.shape() != output_grad.shape() {
        return Err(Error::shape(
            "relu output_grad",
            input.shape(),
            output_grad.shape(),
        ));
    }
    let data = input
        .iter()
        .zip(output_grad.iter())
        .map(|(&x, &g)| if x > E::ZERO { g } else { E::ZERO })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Numerically stabilized softmax over a logit vector: subtracts the max
/// before exponentiating. Outputs lie in (0, 1) and sum to 1.
pub fn softmax<E: Scalar>(logits: &Tensor<E>) -> Result<Tensor<E>> {
    if !logits.all_finite() {
        return Err(Error::NonFinite {
            context: "softmax logits".into(),
        });
    }
    let max = logits
        .iter()
        .fold(logits.data()[0], |m, &v| m.max(v));
    let mut out: Vec<E> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = out.iter().fold(E::ZERO, |acc, &v| acc + v);
    for v in out.iter_mut() {
        *v = *v / sum;
    }
    Tensor::new(logits.shape().to_vec(), out)
}
