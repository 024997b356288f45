//! Batch normalization over the trailing (channel) axis.
//!
//! Statistics are taken across every leading axis, so the same op serves
//! `[B, H, W, C]` feature maps and `[B, n]` dense activations. Train mode
//! normalizes by biased batch statistics and folds them into the running
//! estimates; infer mode normalizes by the running estimates alone.

use crate::error::{Error, Result};
use crate::tensor::{LayerGrad, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Exponential running estimates of the per-channel mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<E: Scalar = f32> {
    pub mean: Tensor<E>,
    pub var: Tensor<E>,
}

impl<E: Scalar> RunningStats<E> {
    /// Fresh stats: mean 0, variance 1.
    pub fn identity(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], E::ONE),
        }
    }
}

/// Forward-pass state the backward pass needs (train mode only).
#[derive(Debug, Clone)]
pub struct BatchNormCache<E: Scalar = f32> {
    batch_var: Tensor<E>,
    normalized: Tensor<E>,
    epsilon: E,
}

fn check_channel_param<E: Scalar>(name: &str, t: &Tensor<E>, channels: usize) -> Result<()> {
    if t.shape() != [channels] {
        return Err(Error::shape(
            format!("batchnorm {name}"),
            &[channels],
            t.shape(),
        ));
    }
    Ok(())
}

/// Normalizes `input`, returning the output and, in train mode, the cache
/// for [`batchnorm_backward`]. Train mode updates `running` in place as
/// `running = momentum * running + (1 - momentum) * batch_stat`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm<E: Scalar>(
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    running: &mut RunningStats<E>,
    mode: BnMode,
    epsilon: E,
    momentum: E,
) -> Result<(Tensor<E>, Option<BatchNormCache<E>>)> {
    let channels = *input.shape().last().ok_or_else(|| {
        Error::InvalidArgument("batchnorm: input must have at least one axis".into())
    })?;
    check_channel_param("gamma", gamma, channels)?;
    check_channel_param("beta", beta, channels)?;
    check_channel_param("running mean", &running.mean, channels)?;
    check_channel_param("running var", &running.var, channels)?;

    let m = input.len() / channels;
    let m_e = E::from_usize(m);

    let (mean, var) = match mode {
        BnMode::Train => {
            let mut mean = Tensor::zeros(&[channels]);
            for px in input.data().chunks_exact(channels) {
                for (acc, &v) in mean.data_mut().iter_mut().zip(px) {
                    *acc += v;
                }
            }
            for v in mean.data_mut().iter_mut() {
                *v = *v / m_e;
            }
            let mut var = Tensor::zeros(&[channels]);
            for px in input.data().chunks_exact(channels) {
                for ((acc, &v), &mu) in var.data_mut().iter_mut().zip(px).zip(mean.iter()) {
                    let d = v - mu;
                    *acc += d * d;
                }
            }
            for v in var.data_mut().iter_mut() {
                *v = *v / m_e;
            }
            for ((r, &b), _) in running
                .mean
                .data_mut()
                .iter_mut()
                .zip(mean.iter())
                .zip(0..channels)
            {
                *r = momentum * *r + (E::ONE - momentum) * b;
            }
            for (r, &b) in running.var.data_mut().iter_mut().zip(var.iter()) {
                *r = momentum * *r + (E::ONE - momentum) * b;
            }
            (mean, var)
        }
        BnMode::Infer => (running.mean.clone(), running.var.clone()),
    };

    let inv_std: Vec<E> = var.iter().map(|&v| E::ONE / (v + epsilon).sqrt()).collect();
    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for ((xhat_px, out_px), px) in normalized
        .data_mut()
        .chunks_exact_mut(channels)
        .zip(out.data_mut().chunks_exact_mut(channels))
        .zip(input.data().chunks_exact(channels))
    {
        for c in 0..channels {
            let xh = (px[c] - mean.at(&[c])) * inv_std[c];
            xhat_px[c] = xh;
            out_px[c] = gamma.at(&[c]) * xh + beta.at(&[c]);
        }
    }

    let cache = match mode {
        BnMode::Train => Some(BatchNormCache {
            batch_var: var,
            normalized,
            epsilon,
        }),
        BnMode::Infer => None,
    };
    Ok((out, cache))
}

/// Analytic gradients through the train-mode normalization. Parameter
/// gradients are named `"gamma"` and `"beta"`.
pub fn batchnorm_backward<E: Scalar>(
    cache: &BatchNormCache<E>,
    gamma: &Tensor<E>,
    output_grad: &Tensor<E>,
) -> Result<LayerGrad<E>> {
    let channels = gamma.len();
    if output_grad.shape() != cache.normalized.shape() {
        return Err(Error::shape(
            "batchnorm output_grad",
            cache.normalized.shape(),
            output_grad.shape(),
        ));
    }
    let m = output_grad.len() / channels;
    let m_e = E::from_usize(m);

    let mut dgamma = Tensor::zeros(&[channels]);
    let mut dbeta = Tensor::zeros(&[channels]);
    for (og_px, xh_px) in output_grad
        .data()
        .chunks_exact(channels)
        .zip(cache.normalized.data().chunks_exact(channels))
    {
        for c in 0..channels {
            dgamma.data_mut()[c] += og_px[c] * xh_px[c];
            dbeta.data_mut()[c] += og_px[c];
        }
    }

    // dx = gamma / sqrt(var + eps) * (og - mean(og) - xhat * mean(og * xhat))
    let inv_std: Vec<E> = cache
        .batch_var
        .iter()
        .map(|&v| E::ONE / (v + cache.epsilon).sqrt())
        .collect();
    let mut input_grad = Tensor::zeros(output_grad.shape());
    for ((ig_px, og_px), xh_px) in input_grad
        .data_mut()
        .chunks_exact_mut(channels)
        .zip(output_grad.data().chunks_exact(channels))
        .zip(cache.normalized.data().chunks_exact(channels))
    {
        for c in 0..channels {
            let mean_og = dbeta.at(&[c]) / m_e;
            let mean_og_xhat = dgamma.at(&[c]) / m_e;
            ig_px[c] =
                gamma.at(&[c]) * inv_std[c] * (og_px[c] - mean_og - xh_px[c] * mean_og_xhat);
        }
    }

    Ok(LayerGrad::new(input_grad)
        .with_param("gamma", dgamma)
        .with_param("beta", dbeta))
}
