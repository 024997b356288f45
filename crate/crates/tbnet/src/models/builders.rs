//! Builders for the three architecture families.

use crate::error::{Error, Result};
use crate::ops::{Padding, RunningStats};
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{FeatureShape, Layer, LayerKind, ModelSpec};

/// Default L2 coefficient on the deeper cnn3 conv kernels.
pub(crate) const CNN3_L2: f32 = 1e-4;
const BN_EPSILON: f32 = 1e-5;
const BN_MOMENTUM: f32 = 0.9;

/// Fan-in-scaled uniform init (He-style for relu stacks): U(-b, b) with
/// b = sqrt(6 / fan_in).
fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut RngState) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| rng.uniform(-bound, bound) as f32)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

fn conv(kh: usize, kw: usize, cin: usize, cout: usize, l2: f32, rng: &mut RngState) -> Layer {
    Layer::new(LayerKind::Conv {
        kernels: init_uniform(&[kh, kw, cin, cout], kh * kw * cin, rng),
        bias: Tensor::zeros(&[cout]),
        padding: Padding::Same,
        l2,
    })
}

fn dense(n: usize, m: usize, rng: &mut RngState) -> Layer {
    Layer::new(LayerKind::Dense {
        weights: init_uniform(&[n, m], n, rng),
        bias: Tensor::zeros(&[m]),
    })
}

fn batchnorm(channels: usize) -> Layer {
    Layer::new(LayerKind::BatchNorm {
        gamma: Tensor::full(&[channels], 1.0),
        beta: Tensor::zeros(&[channels]),
        running: RunningStats::identity(channels),
        epsilon: BN_EPSILON,
        momentum: BN_MOMENTUM,
    })
}

fn relu() -> Layer {
    Layer::new(LayerKind::Relu)
}

fn maxpool() -> Layer {
    Layer::new(LayerKind::MaxPool)
}

fn dropout(rate: f32) -> Layer {
    Layer::new(LayerKind::Dropout { rate })
}

/// The 3-layer CNN: 3x3 convs with 16/32/64 filters (L2 on the deeper two),
/// each followed by 2x2 max pooling; dropout 0.5 plus batch norm after the
/// first pooling stage; two 16-unit dense blocks with batch norm; softmax
/// head.
pub fn build_cnn3(input: [usize; 3], classes: usize, rng: &mut RngState) -> Result<ModelSpec> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    let cin = input[2];
    let mut layers = vec![
        conv(3, 3, cin, 16, 0.0, rng),
        relu(),
        maxpool(),
        dropout(0.5),
        batchnorm(16),
        conv(3, 3, 16, 32, CNN3_L2, rng),
        relu(),
        maxpool(),
        conv(3, 3, 32, 64, CNN3_L2, rng),
        relu(),
        maxpool(),
        Layer::new(LayerKind::Flatten),
    ];
    let flat = (input[0] / 2 / 2 / 2) * (input[1] / 2 / 2 / 2) * 64;
    layers.extend([
        dense(flat, 16, rng),
        batchnorm(16),
        relu(),
        dense(16, 16, rng),
        batchnorm(16),
        relu(),
        dense(16, classes, rng),
        Layer::new(LayerKind::Softmax),
    ]);
    ModelSpec::new("cnn3", input, classes, layers)
}

/// The U-Net-style encoder-classifier: four double-conv encoder blocks
/// (64, 128, 256, 512 filters) each followed by 2x2 max pooling, a
/// 1024-filter double-conv bottleneck, global average pooling, dropout 0.5,
/// and a softmax head. There is no decoder path: the encoder feeds a fully
/// connected classifier.
pub fn build_unet_classifier(
    input: [usize; 3],
    classes: usize,
    rng: &mut RngState,
) -> Result<ModelSpec> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    if input[0] < 16 || input[1] < 16 {
        return Err(Error::InvalidArgument(format!(
            "unet encoder pools four times; input must be at least 16x16, got {}x{}",
            input[0], input[1]
        )));
    }
    let mut layers = Vec::new();
    let mut cin = input[2];
    for filters in [64, 128, 256, 512] {
        layers.push(conv(3, 3, cin, filters, 0.0, rng));
        layers.push(relu());
        layers.push(conv(3, 3, filters, filters, 0.0, rng));
        layers.push(relu());
        layers.push(maxpool());
        cin = filters;
    }
    layers.push(conv(3, 3, 512, 1024, 0.0, rng));
    layers.push(relu());
    layers.push(conv(3, 3, 1024, 1024, 0.0, rng));
    layers.push(relu());
    layers.push(Layer::new(LayerKind::GlobalAveragePool));
    layers.push(dropout(0.5));
    layers.push(dense(1024, classes, rng));
    layers.push(Layer::new(LayerKind::Softmax));
    ModelSpec::new("unet_classifier", input, classes, layers)
}

/// Small seeded conv stack standing in for an ImageNet backbone: two
/// conv+pool blocks ending in a feature map. Meant to be frozen by
/// [`build_tl_head`].
pub fn make_toy_backbone(input: [usize; 3], rng: &mut RngState) -> Result<ModelSpec> {
    let layers = vec![
        conv(3, 3, input[2], 8, 0.0, rng),
        relu(),
        maxpool(),
        conv(3, 3, 8, 16, 0.0, rng),
        relu(),
        maxpool(),
    ];
    let mut spec = ModelSpec {
        name: "toy_backbone".into(),
        input_shape: input,
        class_count: 0,
        layers,
        meta: Default::default(),
    };
    spec.validate()?;
    spec.meta.seed = 0;
    Ok(spec)
}

/// Frozen-backbone transfer head: marks every backbone layer
/// non-trainable, then appends flatten, batch norm, dropout, and a
/// trainable softmax classifier.
pub fn build_tl_head(
    backbone: &ModelSpec,
    classes: usize,
    dropout_rate: f32,
    rng: &mut RngState,
) -> Result<ModelSpec> {
    if backbone.layers.is_empty() {
        return Err(Error::InvalidArgument("backbone has no layers".into()));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    let feature = backbone.output_shape()?;
    let flat_len = feature.len();

    let mut layers: Vec<Layer> = backbone
        .layers
        .iter()
        .cloned()
        .map(|mut l| {
            l.trainable = false;
            l
        })
        .collect();
    if matches!(feature, FeatureShape::Spatial { .. }) {
        layers.push(Layer::new(LayerKind::Flatten));
    }
    layers.push(batchnorm(flat_len));
    layers.push(dropout(dropout_rate));
    layers.push(dense(flat_len, classes, rng));
    layers.push(Layer::new(LayerKind::Softmax));

    ModelSpec::new("tlhead", backbone.input_shape, classes, layers)
}
