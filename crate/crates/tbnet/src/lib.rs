//! Self-contained, framework-free brain-tumor MRI classification pipelines:
//! a 3-layer CNN, a U-Net-style encoder-classifier, frozen-backbone transfer
//! heads, and a selective-search region pipeline, together with the full
//! evaluation protocol (stratified splits, class weights, confusion
//! matrices, precision/recall/F1, ROC/AUC, cross-dataset validation).
//!
//! Everything is deterministic: ops are pure functions of their inputs and
//! an explicit [`RngState`], and the rayon-parallel kernels (feature
//! `parallel`, on by default) are bit-identical to the sequential fallback.

pub mod data;
mod error;
pub mod eval;
pub mod models;
pub mod ops;
pub mod optim;
mod par;
pub mod regions;
mod rng;
mod tensor;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::{LayerGrad, Scalar, Tensor};
