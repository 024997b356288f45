//! Batched model execution: inference, training forward with caches, and
//! backpropagation through the layer stack.
//!
//! Samples fan out in parallel where layers are per-sample (conv, pool,
//! dense), while batch norm and dropout operate on the whole batch in
//! canonical order, so outputs never depend on thread count.

use crate::error::{Error, Result};
use crate::ops::{self, BatchNormCache, BnMode, DropMode, DropoutMask, RunningStats};
use crate::par;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{FeatureShape, LayerKind, ModelSpec};

/// Batched activation: `batch` samples of a common per-sample shape laid
/// out contiguously.
#[derive(Debug, Clone)]
struct Batch {
    batch: usize,
    shape: FeatureShape,
    data: Vec<f32>,
}

impl Batch {
    fn sample_len(&self) -> usize {
        self.shape.len()
    }

    fn sample(&self, b: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    fn with_shape(&self, shape: FeatureShape, data: Vec<f32>) -> Batch {
        Batch {
            batch: self.batch,
            shape,
            data,
        }
    }

    fn into_tensor(self) -> Tensor {
        match self.shape {
            FeatureShape::Flat(n) => Tensor::new(vec![self.batch, n], self.data).unwrap(),
            FeatureShape::Spatial { h, w, c } => {
                Tensor::new(vec![self.batch, h, w, c], self.data).unwrap()
            }
        }
    }
}

/// Per-layer state retained by the training forward pass for backprop.
enum LayerExtra {
    None,
    Pool { argmax: Vec<usize> },
    BnTrain(BatchNormCache<f32>),
    /// Frozen batch-norm layers normalize by running stats even during
    /// training; backward through them is a per-channel scale.
    BnFrozen { scale: Vec<f32> },
    Dropout(DropoutMask),
}

/// Activations and per-layer extras from one training forward pass.
/// `activations[i]` is the input to layer `i`.
pub struct ForwardCache {
    activations: Vec<Batch>,
    extras: Vec<LayerExtra>,
}

/// Output of [`forward_train`].
pub struct TrainForward {
    /// `[B, classes]` class probabilities.
    pub probs: Tensor,
    /// `[B, classes]` pre-softmax logits (the loss consumes these).
    pub logits: Tensor,
    pub cache: ForwardCache,
}

fn batch_from_input(model: &ModelSpec, input: &Tensor) -> Result<Batch> {
    let expect = model.input_shape;
    let ok = input.rank() == 4
        && input.dim(1) == expect[0]
        && input.dim(2) == expect[1]
        && input.dim(3) == expect[2];
    if !ok {
        return Err(Error::shape(
            "model input batch",
            &[0, expect[0], expect[1], expect[2]],
            input.shape(),
        ));
    }
    Ok(Batch {
        batch: input.dim(0),
        shape: model.input_feature_shape(),
        data: input.data().to_vec(),
    })
}

fn softmax_rows(batch: &mut Batch) -> Result<()> {
    let n = batch.sample_len();
    for row in batch.data.chunks_exact_mut(n) {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "softmax logits".into(),
            });
        }
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(())
}

fn spatial(shape: FeatureShape) -> (usize, usize, usize) {
    match shape {
        FeatureShape::Spatial { h, w, c } => (h, w, c),
        FeatureShape::Flat(_) => unreachable!("shape chain validated spatial input"),
    }
}

/// One layer forward. Mutates nothing: a trainable batch-norm layer in
/// train mode reports its updated running stats for the caller to store.
fn apply_layer(
    kind: &LayerKind,
    trainable: bool,
    index: usize,
    layer_out_shape: FeatureShape,
    input: &Batch,
    train: bool,
    rng: Option<&mut RngState>,
) -> Result<(Batch, LayerExtra, Option<RunningStats>)> {
    let _ = index;
    let b = input.batch;
    let out_shape = layer_out_shape;
    match kind {
        LayerKind::Conv {
            kernels,
            bias,
            padding,
            ..
        } => {
            let (h, w, c) = spatial(input.shape);
            let (data, _, _) =
                ops::conv_forward_batch(&input.data, b, h, w, c, kernels, bias, *padding);
            Ok((input.with_shape(out_shape, data), LayerExtra::None, None))
        }
        LayerKind::MaxPool => {
            let (h, w, c) = spatial(input.shape);
            let out_len = out_shape.len();
            let in_len = input.sample_len();
            let parts: Vec<(Vec<f32>, Vec<usize>)> = par::map_indexed(b, |i| {
                let mut o = vec![0.0f32; out_len];
                let mut a = vec![0usize; out_len];
                ops::maxpool_sample_into(input.sample(i), h, w, c, &mut o, &mut a);
                (o, a)
            });
            let mut data = Vec::with_capacity(b * out_len);
            let mut argmax = Vec::with_capacity(b * out_len);
            for (i, (o, a)) in parts.into_iter().enumerate() {
                data.extend_from_slice(&o);
                // Flat indices into the whole batch buffer.
                argmax.extend(a.into_iter().map(|idx| i * in_len + idx));
            }
            Ok((
                input.with_shape(out_shape, data),
                LayerExtra::Pool { argmax },
                None,
            ))
        }
        LayerKind::GlobalAveragePool => {
            let (h, w, c) = spatial(input.shape);
            let mut data = vec![0.0f32; b * c];
            par::for_each_chunk_mut(&mut data, c, |i, out| {
                ops::gap_sample_into(input.sample(i), h * w, c, out)
            });
            Ok((input.with_shape(out_shape, data), LayerExtra::None, None))
        }
        LayerKind::Dense { weights, bias } => {
            let m = bias.len();
            let mut data = vec![0.0f32; b * m];
            par::for_each_chunk_mut(&mut data, m, |i, out| {
                ops::dense_sample_into(input.sample(i), weights.data(), bias.data(), out)
            });
            Ok((input.with_shape(out_shape, data), LayerExtra::None, None))
        }
        LayerKind::Relu => {
            let data = input.data.iter().map(|&v| v.max(0.0)).collect();
            Ok((input.with_shape(out_shape, data), LayerExtra::None, None))
        }
        LayerKind::BatchNorm {
            gamma,
            beta,
            running,
            epsilon,
            momentum,
        } => {
            let channels = gamma.len();
            let rows = input.data.len() / channels;
            let as_rows = Tensor::new(vec![rows, channels], input.data.clone())?;
            let use_batch_stats = train && trainable;
            let mode = if use_batch_stats {
                BnMode::Train
            } else {
                BnMode::Infer
            };
            let mut stats = running.clone();
            let (out, cache) =
                ops::batchnorm(&as_rows, gamma, beta, &mut stats, mode, *epsilon, *momentum)?;
            let (extra, updated) = match cache {
                Some(c) => (LayerExtra::BnTrain(c), Some(stats)),
                None if train => (
                    LayerExtra::BnFrozen {
                        scale: gamma
                            .iter()
                            .zip(running.var.iter())
                            .map(|(&g, &v)| g / (v + epsilon).sqrt())
                            .collect(),
                    },
                    None,
                ),
                None => (LayerExtra::None, None),
            };
            Ok((input.with_shape(out_shape, out.into_data()), extra, updated))
        }
        LayerKind::Dropout { rate } => {
            if !train || *rate == 0.0 {
                return Ok((
                    input.with_shape(out_shape, input.data.clone()),
                    LayerExtra::Dropout(DropoutMask::identity()),
                    None,
                ));
            }
            let rng = rng.expect("training forward requires an rng for dropout");
            let t = Tensor::new(vec![input.data.len()], input.data.clone())?;
            let (out, mask) = ops::dropout(&t, *rate as f64, DropMode::Train, rng)?;
            Ok((
                input.with_shape(out_shape, out.into_data()),
                LayerExtra::Dropout(mask),
                None,
            ))
        }
        LayerKind::Flatten => Ok((
            input.with_shape(out_shape, input.data.clone()),
            LayerExtra::None,
            None,
        )),
        LayerKind::Softmax => {
            let mut out = input.with_shape(out_shape, input.data.clone());
            softmax_rows(&mut out)?;
            Ok((out, LayerExtra::None, None))
        }
    }
}

/// Inference forward: dropout disabled, batch norm on running statistics.
/// Deterministic and side-effect free. Returns `[B, classes]`
/// probabilities.
pub fn forward(model: &ModelSpec, input: &Tensor) -> Result<Tensor> {
    if model.class_count == 0 {
        return Err(Error::InvalidArgument(
            "forward requires a classifier; this model is a headless backbone".into(),
        ));
    }
    let chain = model.shape_chain()?;
    let mut current = batch_from_input(model, input)?;
    for (i, layer) in model.layers.iter().enumerate() {
        let (next, _, _) = apply_layer(
            &layer.kind,
            layer.trainable,
            i,
            chain[i + 1],
            &current,
            false,
            None,
        )?;
        current = next;
    }
    Ok(current.into_tensor())
}

/// Inference probabilities for a list of `[H, W, C]` images, evaluated in
/// batches of `batch_size`. Returns `[N, classes]`.
pub fn predict_probs(
    model: &ModelSpec,
    images: &[Tensor],
    batch_size: usize,
) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = model.class_count;
    let sample_len: usize = images[0].len();
    let mut out = Vec::with_capacity(images.len() * classes);
    for chunk in images.chunks(batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * sample_len);
        for img in chunk {
            if img.shape() != model.input_shape {
                return Err(Error::shape(
                    "predict input image",
                    &model.input_shape,
                    img.shape(),
                ));
            }
            data.extend_from_slice(img.data());
        }
        let batch = Tensor::new(
            vec![
                chunk.len(),
                model.input_shape[0],
                model.input_shape[1],
                model.input_shape[2],
            ],
            data,
        )?;
        let probs = forward(model, &batch)?;
        out.extend_from_slice(probs.data());
    }
    Tensor::new(vec![images.len(), classes], out)
}

/// Training forward: dropout active; trainable batch norm uses batch
/// statistics and folds them into the model's running estimates.
pub fn forward_train(
    model: &mut ModelSpec,
    input: &Tensor,
    rng: &mut RngState,
) -> Result<TrainForward> {
    if model.class_count == 0 {
        return Err(Error::InvalidArgument(
            "forward requires a classifier; this model is a headless backbone".into(),
        ));
    }
    let chain = model.shape_chain()?;
    let input_batch = batch_from_input(model, input)?;
    let layer_count = model.layers.len();
    let mut activations = Vec::with_capacity(layer_count + 1);
    let mut extras = Vec::with_capacity(layer_count);
    activations.push(input_batch);
    for i in 0..layer_count {
        let layer = &model.layers[i];
        let (next, extra, stats) = apply_layer(
            &layer.kind,
            layer.trainable,
            i,
            chain[i + 1],
            activations.last().unwrap(),
            true,
            Some(rng),
        )?;
        if let Some(stats) = stats {
            if let LayerKind::BatchNorm { running, .. } = &mut model.layers[i].kind {
                *running = stats;
            }
        }
        activations.push(next);
        extras.push(extra);
    }
    let logits = activations[layer_count - 1].clone().into_tensor();
    let probs = activations[layer_count].clone().into_tensor();
    Ok(TrainForward {
        probs,
        logits,
        cache: ForwardCache {
            activations,
            extras,
        },
    })
}

/// Backpropagates `dlogits` (gradient at the softmax layer's input, as
/// produced by the fused cross-entropy loss) through every layer below it.
/// Returns per-layer parameter gradients, `grads[i]` for `layers[i]`, in
/// the order the optimizer enumerates them.
pub fn backward(
    model: &ModelSpec,
    cache: &ForwardCache,
    dlogits: &Tensor,
) -> Result<Vec<Vec<(String, Tensor)>>> {
    let layer_count = model.layers.len();
    debug_assert!(matches!(
        model.layers.last().map(|l| &l.kind),
        Some(LayerKind::Softmax)
    ));
    let logits_act = &cache.activations[layer_count - 1];
    let mut grad = logits_act.with_shape(logits_act.shape, dlogits.data().to_vec());
    let mut grads: Vec<Vec<(String, Tensor)>> = vec![Vec::new(); layer_count];

    for i in (0..layer_count - 1).rev() {
        let layer = &model.layers[i];
        let input = &cache.activations[i];
        let extra = &cache.extras[i];
        let b = input.batch;
        let (next_grad, pgrads) = match &layer.kind {
            LayerKind::Conv {
                kernels, padding, ..
            } => {
                let (h, w, c) = spatial(input.shape);
                let (kg, bg) = ops::conv_param_grads_batch(
                    &input.data,
                    b,
                    h,
                    w,
                    c,
                    kernels,
                    *padding,
                    &grad.data,
                );
                let ig = ops::conv_input_grads_batch(b, h, w, c, kernels, *padding, &grad.data);
                (
                    input.with_shape(input.shape, ig),
                    vec![("kernels".to_string(), kg), ("bias".to_string(), bg)],
                )
            }
            LayerKind::MaxPool => {
                let argmax = match extra {
                    LayerExtra::Pool { argmax } => argmax,
                    _ => unreachable!("pool extra missing"),
                };
                let mut ig = vec![0.0f32; input.data.len()];
                for (&idx, &g) in argmax.iter().zip(grad.data.iter()) {
                    ig[idx] += g;
                }
                (input.with_shape(input.shape, ig), Vec::new())
            }
            LayerKind::GlobalAveragePool => {
                let (h, w, c) = spatial(input.shape);
                let inv = 1.0 / (h * w) as f32;
                let mut ig = vec![0.0f32; input.data.len()];
                par::for_each_chunk_mut(&mut ig, h * w * c, |s, sample| {
                    let og = &grad.data[s * c..(s + 1) * c];
                    for px in sample.chunks_exact_mut(c) {
                        for (g, &o) in px.iter_mut().zip(og) {
                            *g = o * inv;
                        }
                    }
                });
                (input.with_shape(input.shape, ig), Vec::new())
            }
            LayerKind::Dense { weights, .. } => {
                let n = weights.dim(0);
                let m = weights.dim(1);
                let mut wg = Tensor::zeros(&[n, m]);
                let mut bg = Tensor::zeros(&[m]);
                // Parameter grads accumulate over samples in batch order.
                for s in 0..b {
                    let x = input.sample(s);
                    let og = &grad.data[s * m..(s + 1) * m];
                    for (wg_row, &xv) in wg.data_mut().chunks_exact_mut(m).zip(x) {
                        for (gw, &g) in wg_row.iter_mut().zip(og) {
                            *gw += xv * g;
                        }
                    }
                    for (gb, &g) in bg.data_mut().iter_mut().zip(og) {
                        *gb += g;
                    }
                }
                let mut ig = vec![0.0f32; b * n];
                par::for_each_chunk_mut(&mut ig, n, |s, row| {
                    let og = &grad.data[s * m..(s + 1) * m];
                    for (g, w_row) in row.iter_mut().zip(weights.data().chunks_exact(m)) {
                        let mut acc = 0.0f32;
                        for (&w, &o) in w_row.iter().zip(og) {
                            acc += w * o;
                        }
                        *g = acc;
                    }
                });
                (
                    input.with_shape(input.shape, ig),
                    vec![("weights".to_string(), wg), ("bias".to_string(), bg)],
                )
            }
            LayerKind::Relu => {
                let ig = input
                    .data
                    .iter()
                    .zip(grad.data.iter())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                (input.with_shape(input.shape, ig), Vec::new())
            }
            LayerKind::BatchNorm { gamma, .. } => match extra {
                LayerExtra::BnTrain(bn_cache) => {
                    let channels = gamma.len();
                    let rows = grad.data.len() / channels;
                    let og = Tensor::new(vec![rows, channels], grad.data.clone())?;
                    let lg = ops::batchnorm_backward(bn_cache, gamma, &og)?;
                    (
                        input.with_shape(input.shape, lg.input_grad.into_data()),
                        lg.param_grads,
                    )
                }
                LayerExtra::BnFrozen { scale } => {
                    let channels = scale.len();
                    let ig = grad
                        .data
                        .iter()
                        .enumerate()
                        .map(|(j, &g)| g * scale[j % channels])
                        .collect();
                    (input.with_shape(input.shape, ig), Vec::new())
                }
                _ => unreachable!("batchnorm extra missing"),
            },
            LayerKind::Dropout { .. } => {
                let mask = match extra {
                    LayerExtra::Dropout(m) => m,
                    _ => unreachable!("dropout extra missing"),
                };
                let og = Tensor::new(vec![grad.data.len()], grad.data.clone())?;
                let ig = ops::dropout_backward(mask, &og)?;
                (input.with_shape(input.shape, ig.into_data()), Vec::new())
            }
            LayerKind::Flatten => (
                input.with_shape(input.shape, grad.data.clone()),
                Vec::new(),
            ),
            LayerKind::Softmax => unreachable!("softmax is fused into the loss"),
        };
        grads[i] = pgrads;
        grad = next_grad;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_cnn3, build_tl_head, make_toy_backbone};
    use crate::RngState;

    fn random_batch(shape: [usize; 3], b: usize, rng: &mut RngState) -> Tensor {
        let len = b * shape[0] * shape[1] * shape[2];
        let data = (0..len).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        Tensor::new(vec![b, shape[0], shape[1], shape[2]], data).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = RngState::new(21);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let batch = random_batch([16, 16, 1], 4, &mut rng);
        let probs = forward(&model, &batch).unwrap();
        assert_eq!(probs.shape(), &[4, 3]);
        for row in probs.data().chunks_exact(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infer_is_deterministic_and_pure() {
        let mut rng = RngState::new(22);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let batch = random_batch([16, 16, 1], 2, &mut rng);
        let a = forward(&model, &batch).unwrap();
        let b = forward(&model, &batch).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn toy_backbone_composes_into_classifier() {
        let mut rng = RngState::new(3);
        let backbone = make_toy_backbone([64, 64, 1], &mut rng).unwrap();
        let model = build_tl_head(&backbone, 3, 0.2, &mut rng).unwrap();
        let batch = random_batch([64, 64, 1], 2, &mut rng);
        let probs = forward(&model, &batch).unwrap();
        assert!(probs.all_finite());
        for row in probs.data().chunks_exact(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let mut rng = RngState::new(23);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let batch = random_batch([8, 8, 1], 2, &mut rng);
        let err = forward(&model, &batch).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn headless_backbone_cannot_classify() {
        let mut rng = RngState::new(24);
        let backbone = make_toy_backbone([16, 16, 1], &mut rng).unwrap();
        let batch = random_batch([16, 16, 1], 1, &mut rng);
        assert!(forward(&backbone, &batch).is_err());
    }

    /// Whole-model check: analytic parameter gradients from `backward`
    /// match central differences of a weighted-logit objective on a
    /// miniature cnn3 (f32 forward, so tolerances are loose).
    #[test]
    fn backward_matches_finite_differences_tiny_model() {
        let mut rng = RngState::new(77);
        let mut model = build_cnn3([8, 8, 1], 2, &mut rng).unwrap();
        for layer in &mut model.layers {
            if let LayerKind::Dropout { rate } = &mut layer.kind {
                *rate = 0.0;
            }
        }
        let batch = random_batch([8, 8, 1], 3, &mut rng);
        let weights: Vec<f32> = (0..6).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();

        let eval = |m: &ModelSpec| -> f64 {
            let mut m = m.clone();
            let mut r = RngState::new(0);
            let fwd = forward_train(&mut m, &batch, &mut r).unwrap();
            fwd.logits
                .iter()
                .zip(&weights)
                .map(|(&l, &w)| (l as f64) * (w as f64))
                .sum()
        };

        let fwd = forward_train(&mut model.clone(), &batch, &mut RngState::new(0)).unwrap();
        let dlogits = Tensor::new(vec![3, 2], weights.clone()).unwrap();
        let grads = backward(&model, &fwd.cache, &dlogits).unwrap();

        fn bump(model: &mut ModelSpec, li: usize, pname: &str, idx: usize, eps: f32) {
            match &mut model.layers[li].kind {
                LayerKind::Conv { kernels, .. } if pname == "kernels" => {
                    kernels.data_mut()[idx] += eps;
                }
                LayerKind::Dense { weights, .. } if pname == "weights" => {
                    weights.data_mut()[idx] += eps;
                }
                other => panic!("unexpected layer {other:?}"),
            }
        }

        // f32 forward with pooling/relu kinks: keep eps small so a +-eps
        // bump rarely flips an argmax, and the tolerance loose.
        for (li, pname) in [(0usize, "kernels"), (12usize, "weights")] {
            let pg = grads[li]
                .iter()
                .find(|(n, _)| n == pname)
                .map(|(_, t)| t.clone())
                .unwrap_or_else(|| panic!("layer {li} has no {pname} grad"));
            for probe in [0usize, 1, pg.len() / 2, pg.len() - 1] {
                let analytic = pg.data()[probe] as f64;
                if analytic.abs() < 1e-2 {
                    continue;
                }
                let eps = 1e-3f32;
                let mut plus = model.clone();
                let mut minus = model.clone();
                bump(&mut plus, li, pname, probe, eps);
                bump(&mut minus, li, pname, probe, -eps);
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps as f64);
                let denom = analytic.abs().max(numeric.abs());
                assert!(
                    (analytic - numeric).abs() / denom < 0.08,
                    "layer {li} {pname}[{probe}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }
}
