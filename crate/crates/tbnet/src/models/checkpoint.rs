//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "TBCK" | u32 version (=1)
//! u32 name_len | name bytes (UTF-8)
//! u8 input rank (=3) | u32 dims[3]
//! u32 class_count (0 = headless backbone)
//! u32 epochs_run | f32 final_lr | u64 seed
//! u32 layer_count
//! per layer:
//!   u8 kind tag | u8 trainable
//!   kind block:   conv  -> u8 padding (0 valid, 1 same) | f32 l2
//!                 batchnorm -> f32 epsilon | f32 momentum
//!                 dropout   -> f32 rate
//!                 (others empty)
//!   u32 param_count
//!   per param: u32 name_len | name | u8 rank | u32 dims[] | f32 data[]
//! ```
//!
//! Weights are stored as raw 32-bit floats, so a load/save round trip
//! reproduces forward outputs bit-identically.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ops::{Padding, RunningStats};
use crate::tensor::Tensor;

use super::{Layer, LayerKind, ModelSpec, TrainMeta};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_MAXPOOL: u8 = 1;
const TAG_GAP: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_RELU: u8 = 4;
const TAG_BATCHNORM: u8 = 5;
const TAG_DROPOUT: u8 = 6;
const TAG_FLATTEN: u8 = 7;
const TAG_SOFTMAX: u8 = 8;

fn kind_tag(kind: &LayerKind) -> u8 {
    match kind {
        LayerKind::Conv { .. } => TAG_CONV,
        LayerKind::MaxPool => TAG_MAXPOOL,
        LayerKind::GlobalAveragePool => TAG_GAP,
        LayerKind::Dense { .. } => TAG_DENSE,
        LayerKind::Relu => TAG_RELU,
        LayerKind::BatchNorm { .. } => TAG_BATCHNORM,
        LayerKind::Dropout { .. } => TAG_DROPOUT,
        LayerKind::Flatten => TAG_FLATTEN,
        LayerKind::Softmax => TAG_SOFTMAX,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, name: &str, t: &Tensor) {
        self.str(name);
        self.u8(t.rank() as u8);
        for &d in t.shape() {
            self.u32(d as u32);
        }
        for &v in t.iter() {
            self.f32(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Truncated(format!("{what} (utf-8)")))
    }
    fn tensor(&mut self, expected_name: &str) -> Result<Tensor> {
        let name = self.str("parameter name")?;
        if name != expected_name {
            return Err(Error::Truncated(format!(
                "parameter {expected_name} (found {name})"
            )));
        }
        let rank = self.u8("parameter rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("parameter dims")? as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = self.take(len * 4, "parameter data")?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }
}

/// Serializes the model (architecture, all weights, running stats, and
/// training metadata) to `path`.
pub fn save_checkpoint(model: &ModelSpec, path: &Path) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str(&model.name);
    w.u8(3);
    for d in model.input_shape {
        w.u32(d as u32);
    }
    w.u32(model.class_count as u32);
    w.u32(model.meta.epochs_run);
    w.f32(model.meta.final_lr);
    w.u64(model.meta.seed);
    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        w.u8(kind_tag(&layer.kind));
        w.u8(layer.trainable as u8);
        match &layer.kind {
            LayerKind::Conv { padding, l2, .. } => {
                w.u8(matches!(padding, Padding::Same) as u8);
                w.f32(*l2);
            }
            LayerKind::BatchNorm {
                epsilon, momentum, ..
            } => {
                w.f32(*epsilon);
                w.f32(*momentum);
            }
            LayerKind::Dropout { rate } => {
                w.f32(*rate);
            }
            _ => {}
        }
        let params = layer.params();
        w.u32(params.len() as u32);
        for (name, t) in params {
            w.tensor(name, t);
        }
    }
    std::fs::write(path, &w.buf).map_err(|e| Error::io(path, e))
}

fn expect_param_count(r: &mut Reader, expected: u32) -> Result<()> {
    let count = r.u32("parameter count")?;
    if count != expected {
        return Err(Error::Truncated(format!(
            "parameter count (expected {expected}, found {count})"
        )));
    }
    Ok(())
}

/// Loads a checkpoint and revalidates the model's shape chain.
pub fn load_checkpoint(path: &Path) -> Result<ModelSpec> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };

    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            actual: magic,
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let name = r.str("model name")?;
    let rank = r.u8("input rank")?;
    if rank != 3 {
        return Err(Error::Truncated(format!("input rank (expected 3, found {rank})")));
    }
    let mut input_shape = [0usize; 3];
    for d in &mut input_shape {
        *d = r.u32("input dims")? as usize;
    }
    let class_count = r.u32("class count")? as usize;
    let meta = TrainMeta {
        epochs_run: r.u32("epochs run")?,
        final_lr: r.f32("final lr")?,
        seed: r.u64("seed")?,
    };
    let layer_count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let tag = r.u8("layer kind")?;
        let trainable = r.u8("trainable flag")? != 0;
        let kind = match tag {
            TAG_CONV => {
                let padding = if r.u8("conv padding")? == 1 {
                    Padding::Same
                } else {
                    Padding::Valid
                };
                let l2 = r.f32("conv l2")?;
                expect_param_count(&mut r, 2)?;
                let kernels = r.tensor("kernels")?;
                let bias = r.tensor("bias")?;
                LayerKind::Conv {
                    kernels,
                    bias,
                    padding,
                    l2,
                }
            }
            TAG_MAXPOOL => {
                expect_param_count(&mut r, 0)?;
                LayerKind::MaxPool
            }
            TAG_GAP => {
                expect_param_count(&mut r, 0)?;
                LayerKind::GlobalAveragePool
            }
            TAG_DENSE => {
                expect_param_count(&mut r, 2)?;
                let weights = r.tensor("weights")?;
                let bias = r.tensor("bias")?;
                LayerKind::Dense { weights, bias }
            }
            TAG_RELU => {
                expect_param_count(&mut r, 0)?;
                LayerKind::Relu
            }
            TAG_BATCHNORM => {
                let epsilon = r.f32("batchnorm epsilon")?;
                let momentum = r.f32("batchnorm momentum")?;
                expect_param_count(&mut r, 4)?;
                let gamma = r.tensor("gamma")?;
                let beta = r.tensor("beta")?;
                let mean = r.tensor("running_mean")?;
                let var = r.tensor("running_var")?;
                LayerKind::BatchNorm {
                    gamma,
                    beta,
                    running: RunningStats { mean, var },
                    epsilon,
                    momentum,
                }
            }
            TAG_DROPOUT => {
                let rate = r.f32("dropout rate")?;
                expect_param_count(&mut r, 0)?;
                LayerKind::Dropout { rate }
            }
            TAG_FLATTEN => {
                expect_param_count(&mut r, 0)?;
                LayerKind::Flatten
            }
            TAG_SOFTMAX => {
                expect_param_count(&mut r, 0)?;
                LayerKind::Softmax
            }
            other => return Err(Error::Truncated(format!("unknown layer kind tag {other}"))),
        };
        layers.push(Layer { kind, trainable });
    }
    if r.pos != buf.len() {
        return Err(Error::Truncated("trailing bytes after layer table".into()));
    }

    let mut model = ModelSpec::new(name, input_shape, class_count, layers)?;
    model.meta = meta;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_cnn3, forward, make_toy_backbone};
    use crate::RngState;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the tempdir so the file survives for the test body.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn round_trip_reproduces_forward_bitwise() {
        let mut rng = RngState::new(15);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let path = tmp("model.tbck");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let data: Vec<f32> = (0..2 * 16 * 16).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        let batch = Tensor::new(vec![2, 16, 16, 1], data).unwrap();
        let a = forward(&model, &batch).unwrap();
        let b = forward(&loaded, &batch).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(loaded.name, "cnn3");
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut rng = RngState::new(15);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let path = tmp("bad_magic.tbck");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::BadMagic { .. }
        ));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut rng = RngState::new(15);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let path = tmp("bad_version.tbck");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::UnsupportedVersion(9)
        ));
    }

    #[test]
    fn truncated_tensor_rejected() {
        let mut rng = RngState::new(15);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        let path = tmp("truncated.tbck");
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::Truncated(_)
        ));
    }

    #[test]
    fn cnn3_checkpoint_lists_expected_tensors_in_order() {
        let mut rng = RngState::new(15);
        let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
        // Enumerate layer parameters independently from the layer list.
        let expected: Vec<String> = model
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params()
                    .into_iter()
                    .map(move |(n, _)| format!("layer{i}.{n}"))
            })
            .collect();
        let named: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(named, expected);
        // Spot-check the head and tail of the ordering.
        assert_eq!(named.first().unwrap(), "layer0.kernels");
        assert!(named.last().unwrap().ends_with("bias"));
    }

    #[test]
    fn backbone_round_trip_keeps_trainable_flags() {
        let mut rng = RngState::new(2);
        let backbone = make_toy_backbone([32, 32, 1], &mut rng).unwrap();
        let model = crate::models::build_tl_head(&backbone, 3, 0.2, &mut rng).unwrap();
        let path = tmp("tl.tbck");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let flags: Vec<bool> = loaded.layers.iter().map(|l| l.trainable).collect();
        let orig: Vec<bool> = model.layers.iter().map(|l| l.trainable).collect();
        assert_eq!(flags, orig);
    }
}
