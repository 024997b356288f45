//! The deterministic mini-batch training loop.

use crate::error::{Error, Result};
use crate::models::{backward, forward_train, predict_probs, LayerKind, ModelSpec};
use crate::ops::l2_penalty;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::adam::{adam_step, AdamState};
use super::loss::sparse_ce_loss;
use super::schedule::{plateau_update, PlateauSchedule};

/// Run configuration for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Per-class loss multipliers; uniform when absent.
    pub class_weights: Option<Vec<f32>>,
    /// Shuffle/dropout seed; recorded in checkpoint metadata. The caller
    /// seeds the [`RngState`] passed to [`train`] from this.
    pub seed: u64,
    pub schedule: Option<PlateauSchedule>,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f32) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            lr,
            class_weights: None,
            seed: 0,
            schedule: None,
        }
    }
}

/// Per-epoch record. `lr` is the rate in effect during the epoch; a
/// plateau cut applies from the following epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f32,
    pub train_acc: f32,
    pub val_loss: Option<f32>,
    pub val_acc: Option<f32>,
    pub lr: f32,
}

fn stack_batch(model: &ModelSpec, images: &[Tensor], indices: &[usize]) -> Result<Tensor> {
    let [h, w, c] = model.input_shape;
    let mut data = Vec::with_capacity(indices.len() * h * w * c);
    for &i in indices {
        if images[i].shape() != [h, w, c] {
            return Err(Error::shape(
                "training image",
                &[h, w, c],
                images[i].shape(),
            ));
        }
        data.extend_from_slice(images[i].data());
    }
    Tensor::new(vec![indices.len(), h, w, c], data)
}

fn accuracy_of(probs: &Tensor, labels: &[usize]) -> f32 {
    let classes = probs.dim(1);
    let correct = probs
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            argmax == y
        })
        .count();
    correct as f32 / labels.len() as f32
}

/// Inference-mode loss (unweighted cross-entropy) and accuracy.
fn infer_stats(
    model: &ModelSpec,
    images: &[Tensor],
    labels: &[usize],
    batch_size: usize,
) -> Result<(f32, f32)> {
    let probs = predict_probs(model, images, batch_size)?;
    let mut loss = 0.0f64;
    let classes = probs.dim(1);
    for (row, &y) in probs.data().chunks_exact(classes).zip(labels) {
        loss += -(row[y].max(f32::MIN_POSITIVE) as f64).ln();
    }
    Ok((
        (loss / labels.len() as f64) as f32,
        accuracy_of(&probs, labels),
    ))
}

/// Trains `model` in place: per epoch, a seeded shuffle, mini-batches (the
/// last partial batch is kept), forward, weighted cross-entropy plus any
/// per-layer L2 terms, backward, and an Adam step over trainable
/// parameters only. Frozen layers are untouched. Deterministic given
/// `rng`.
pub fn train(
    model: &mut ModelSpec,
    images: &[Tensor],
    labels: &[usize],
    validation: Option<(&[Tensor], &[usize])>,
    config: &TrainConfig,
    rng: &mut RngState,
) -> Result<Vec<EpochStats>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    if config.lr < 0.0 {
        return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
    }
    let classes = model.class_count;
    for (index, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
    }
    if let Some(w) = &config.class_weights {
        if w.len() != classes {
            return Err(Error::shape("class weights", &[classes], &[w.len()]));
        }
    }

    // Conv layers carrying an L2 penalty (trainable only).
    let l2_layers: Vec<(usize, f32)> = model
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match &l.kind {
            LayerKind::Conv { l2, .. } if l.trainable && *l2 > 0.0 => Some((i, *l2)),
            _ => None,
        })
        .collect();

    let mut adam = AdamState::new(config.lr);
    let mut schedule = config.schedule.clone();
    let mut stats = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..images.len()).collect();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut indices);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;

        for (batch_idx, batch_indices) in indices.chunks(config.batch_size).enumerate() {
            let numeric_failure = |_| Error::NanLoss {
                epoch,
                batch: batch_idx,
            };
            let batch = stack_batch(model, images, batch_indices)?;
            let batch_labels: Vec<usize> = batch_indices.iter().map(|&i| labels[i]).collect();

            let fwd = forward_train(model, &batch, rng).map_err(|e| match e {
                Error::NonFinite { .. } => numeric_failure(()),
                other => other,
            })?;
            let (ce, dlogits) =
                sparse_ce_loss(&fwd.logits, &batch_labels, config.class_weights.as_deref())?;

            let mut batch_loss = ce;
            for &(li, lambda) in &l2_layers {
                if let LayerKind::Conv { kernels, .. } = &model.layers[li].kind {
                    let (penalty, _) = l2_penalty(kernels, lambda);
                    batch_loss += penalty;
                }
            }
            if !batch_loss.is_finite() {
                return Err(numeric_failure(()));
            }

            let mut grads = backward(model, &fwd.cache, &dlogits)?;
            for &(li, lambda) in &l2_layers {
                if let LayerKind::Conv { kernels, .. } = &model.layers[li].kind {
                    let (_, l2_grad) = l2_penalty(kernels, lambda);
                    let kg = grads[li]
                        .iter_mut()
                        .find(|(n, _)| n == "kernels")
                        .expect("conv produces kernel grads");
                    for (g, &r) in kg.1.data_mut().iter_mut().zip(l2_grad.iter()) {
                        *g += r;
                    }
                }
            }

            // Flatten gradients in the optimizer's parameter order.
            let flat_grads: Vec<Tensor> = model
                .layers
                .iter()
                .enumerate()
                .filter(|(_, l)| l.trainable)
                .flat_map(|(i, _)| std::mem::take(&mut grads[i]))
                .map(|(_, g)| g)
                .collect();
            let mut params = model.trainable_params_mut();
            debug_assert_eq!(params.len(), flat_grads.len());
            adam_step(&mut adam, &mut params, &flat_grads)?;

            loss_sum += batch_loss as f64 * batch_indices.len() as f64;
            correct += (accuracy_of(&fwd.probs, &batch_labels) * batch_labels.len() as f32)
                .round() as usize;
        }

        let train_loss = (loss_sum / images.len() as f64) as f32;
        let train_acc = correct as f32 / images.len() as f32;
        let (val_loss, val_acc) = match validation {
            Some((vi, vl)) => {
                let (l, a) = infer_stats(model, vi, vl, config.batch_size)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };

        let epoch_lr = adam.lr;
        if let Some(sched) = schedule.as_mut() {
            let monitored = val_loss.unwrap_or(train_loss);
            adam.lr = plateau_update(sched, adam.lr, monitored);
        }

        stats.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            lr: epoch_lr,
        });
    }

    model.meta.epochs_run += config.epochs as u32;
    model.meta.final_lr = adam.lr;
    model.meta.seed = config.seed;
    Ok(stats)
}
