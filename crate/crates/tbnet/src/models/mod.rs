//! Declarative model descriptions for the three architecture families,
//! plus forward/backward execution and checkpoint serialization.

mod builders;
mod checkpoint;
mod forward;

pub use builders::{build_cnn3, build_tl_head, build_unet_classifier, make_toy_backbone};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{backward, forward, forward_train, predict_probs, ForwardCache, TrainForward};

use crate::error::{Error, Result};
use crate::ops::{Padding, RunningStats};
use crate::tensor::Tensor;

/// Shape of the value flowing between layers: a feature map or a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Spatial { h, w, c } => h * w * c,
            FeatureShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn dims(&self) -> Vec<usize> {
        match *self {
            FeatureShape::Spatial { h, w, c } => vec![h, w, c],
            FeatureShape::Flat(n) => vec![n],
        }
    }

    /// Channel count for per-channel ops: last axis.
    fn channels(&self) -> usize {
        match *self {
            FeatureShape::Spatial { c, .. } => c,
            FeatureShape::Flat(n) => n,
        }
    }
}

/// One layer: its kind-specific parameters plus a trainability flag the
/// optimizer honors.
#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    pub trainable: bool,
}

impl Layer {
    pub fn new(kind: LayerKind) -> Self {
        Layer {
            kind,
            trainable: true,
        }
    }

    /// All persistent tensors of this layer, in checkpoint order. Running
    /// batch-norm statistics are included: they are state, not optimizer
    /// targets, but a reloaded model must reproduce inference bit-exactly.
    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match &self.kind {
            LayerKind::Conv { kernels, bias, .. } => {
                vec![("kernels", kernels), ("bias", bias)]
            }
            LayerKind::Dense { weights, bias } => vec![("weights", weights), ("bias", bias)],
            LayerKind::BatchNorm {
                gamma,
                beta,
                running,
                ..
            } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("running_mean", &running.mean),
                ("running_var", &running.var),
            ],
            _ => Vec::new(),
        }
    }

    /// Tensors the optimizer may update, in the same relative order as the
    /// gradients produced by [`backward`].
    fn optimizable_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match &mut self.kind {
            LayerKind::Conv { kernels, bias, .. } => {
                vec![("kernels", kernels), ("bias", bias)]
            }
            LayerKind::Dense { weights, bias } => vec![("weights", weights), ("bias", bias)],
            LayerKind::BatchNorm { gamma, beta, .. } => vec![("gamma", gamma), ("beta", beta)],
            _ => Vec::new(),
        }
    }

    fn output_shape(&self, input: FeatureShape, index: usize) -> Result<FeatureShape> {
        let mismatch = |expected: &[usize], actual: &[usize]| {
            Err(Error::shape(
                format!("layer {index} ({})", self.kind.name()),
                expected,
                actual,
            ))
        };
        match &self.kind {
            LayerKind::Conv {
                kernels, padding, ..
            } => match input {
                FeatureShape::Spatial { h, w, c } => {
                    if kernels.dim(2) != c {
                        return mismatch(
                            &[kernels.dim(0), kernels.dim(1), c, kernels.dim(3)],
                            kernels.shape(),
                        );
                    }
                    let (oh, ow, _, _) = crate::ops::conv_output_geometry(
                        h,
                        w,
                        kernels.dim(0),
                        kernels.dim(1),
                        *padding,
                    );
                    Ok(FeatureShape::Spatial {
                        h: oh,
                        w: ow,
                        c: kernels.dim(3),
                    })
                }
                FeatureShape::Flat(n) => mismatch(&[0, 0, 0], &[n]),
            },
            LayerKind::MaxPool => match input {
                FeatureShape::Spatial { h, w, c } if h >= 2 && w >= 2 => Ok(FeatureShape::Spatial {
                    h: h / 2,
                    w: w / 2,
                    c,
                }),
                FeatureShape::Spatial { h, w, .. } => Err(Error::InvalidArgument(format!(
                    "layer {index}: maxpool needs at least 2x2 input, got {h}x{w}"
                ))),
                FeatureShape::Flat(n) => mismatch(&[0, 0, 0], &[n]),
            },
            LayerKind::GlobalAveragePool => match input {
                FeatureShape::Spatial { c, .. } => Ok(FeatureShape::Flat(c)),
                FeatureShape::Flat(n) => mismatch(&[0, 0, 0], &[n]),
            },
            LayerKind::Dense { weights, .. } => match input {
                FeatureShape::Flat(n) if weights.dim(0) == n => {
                    Ok(FeatureShape::Flat(weights.dim(1)))
                }
                other => mismatch(weights.shape(), &other.dims()),
            },
            LayerKind::BatchNorm { gamma, .. } => {
                if gamma.len() != input.channels() {
                    return mismatch(&[input.channels()], gamma.shape());
                }
                Ok(input)
            }
            LayerKind::Flatten => Ok(FeatureShape::Flat(input.len())),
            LayerKind::Relu | LayerKind::Dropout { .. } | LayerKind::Softmax => Ok(input),
        }
    }
}

/// Layer kinds and their parameters. Spatial tensors are channels-last.
#[derive(Debug, Clone)]
pub enum LayerKind {
    Conv {
        /// `[kh, kw, cin, cout]`
        kernels: Tensor,
        bias: Tensor,
        padding: Padding,
        /// L2 penalty coefficient on the kernels; 0 disables.
        l2: f32,
    },
    MaxPool,
    GlobalAveragePool,
    Dense {
        /// `[n, m]`
        weights: Tensor,
        bias: Tensor,
    },
    Relu,
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running: RunningStats,
        epsilon: f32,
        momentum: f32,
    },
    Dropout {
        rate: f32,
    },
    Flatten,
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::GlobalAveragePool => "gap",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// Training metadata carried through checkpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainMeta {
    pub epochs_run: u32,
    pub final_lr: f32,
    pub seed: u64,
}

/// An ordered layer graph with a fixed input shape. `class_count == 0`
/// marks a headless feature extractor (e.g. a transfer-learning backbone);
/// classifiers end in exactly one softmax layer over `class_count` units.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: [usize; 3],
    pub class_count: usize,
    pub layers: Vec<Layer>,
    pub meta: TrainMeta,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        class_count: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            name: name.into(),
            input_shape,
            class_count,
            layers,
            meta: TrainMeta::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn input_feature_shape(&self) -> FeatureShape {
        FeatureShape::Spatial {
            h: self.input_shape[0],
            w: self.input_shape[1],
            c: self.input_shape[2],
        }
    }

    /// Shapes flowing through the model: `chain[0]` is the input shape,
    /// `chain[i + 1]` the output of layer `i`.
    pub fn shape_chain(&self) -> Result<Vec<FeatureShape>> {
        let mut chain = vec![self.input_feature_shape()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(*chain.last().unwrap(), i)?;
            chain.push(next);
        }
        Ok(chain)
    }

    /// Validates the shape chain, and for classifiers the terminal-softmax
    /// contract: exactly one softmax, in last position, over `class_count`
    /// units.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        let chain = self.shape_chain()?;
        if self.class_count > 0 {
            let softmax_count = self
                .layers
                .iter()
                .filter(|l| matches!(l.kind, LayerKind::Softmax))
                .count();
            let last_is_softmax =
                matches!(self.layers.last().map(|l| &l.kind), Some(LayerKind::Softmax));
            if softmax_count != 1 || !last_is_softmax {
                return Err(Error::InvalidArgument(format!(
                    "classifier must end in exactly one softmax layer, found {softmax_count}"
                )));
            }
            if *chain.last().unwrap() != FeatureShape::Flat(self.class_count) {
                return Err(Error::InvalidArgument(format!(
                    "terminal layer produces {:?}, expected {} class probabilities",
                    chain.last().unwrap(),
                    self.class_count
                )));
            }
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Result<FeatureShape> {
        Ok(*self.shape_chain()?.last().unwrap())
    }

    /// Every persistent tensor, named `layer{i}.{param}`, in layer order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.params() {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        out
    }

    /// Mutable references to the optimizer targets of trainable layers,
    /// aligned with the gradient order produced by [`backward`].
    pub fn trainable_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if !layer.trainable {
                continue;
            }
            for (name, t) in layer.optimizable_mut() {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        out
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.trainable)
            .flat_map(|l| l.params())
            .filter(|(name, _)| !name.starts_with("running"))
            .map(|(_, t)| t.len())
            .sum()
    }
}
