//! Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time
//! so inference is the identity.

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropMode {
    Train,
    Infer,
}

/// Keep/drop decisions from the forward pass; empty in infer mode.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    keep: Vec<bool>,
    rate: f64,
}

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask {
            keep: Vec::new(),
            rate: 0.0,
        }
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Zeroes each element with probability `rate` (train mode) and rescales
/// survivors; infer mode is the identity. Deterministic given `rng`: one
/// uniform draw per element in flat order.
pub fn dropout<E: Scalar>(
    input: &Tensor<E>,
    rate: f64,
    mode: DropMode,
    rng: &mut RngState,
) -> Result<(Tensor<E>, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if mode == DropMode::Infer || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity()));
    }
    let scale = E::from_f64(1.0 / (1.0 - rate));
    let mut keep = Vec::with_capacity(input.len());
    let data = input
        .iter()
        .map(|&v| {
            let k = rng.next_f64() >= rate;
            keep.push(k);
            if k {
                v * scale
            } else {
                E::ZERO
            }
        })
        .collect();
    Ok((
        Tensor::new(input.shape().to_vec(), data)?,
        DropoutMask { keep, rate },
    ))
}

/// Routes gradient through surviving elements with the same scale.
pub fn dropout_backward<E: Scalar>(
    mask: &DropoutMask,
    output_grad: &Tensor<E>,
) -> Result<Tensor<E>> {
    if mask.keep.is_empty() {
        return Ok(output_grad.clone());
    }
    if mask.keep.len() != output_grad.len() {
        return Err(Error::shape(
            "dropout output_grad",
            &[mask.keep.len()],
            output_grad.shape(),
        ));
    }
    let scale = E::from_f64(1.0 / (1.0 - mask.rate));
    let data = output_grad
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g * scale } else { E::ZERO })
        .collect();
    Tensor::new(output_grad.shape().to_vec(), data)
}
