//! The parallel kernels must be bit-identical to the sequential fallback.
//!
//! These fixtures freeze exact output bits for a fixed seeded workload;
//! `cargo test` (parallel) and `cargo test --no-default-features`
//! (sequential) both check against the same constants, so any divergence
//! between the two paths trips here.

use tbnet::models::{build_cnn3, forward};
use tbnet::ops::{conv2d, conv2d_backward, Padding};
use tbnet::{RngState, Tensor};

fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// FNV-1a over the raw f32 bits, order-sensitive.
fn bits_hash(data: &[f32]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in data {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

#[test]
fn conv_forward_and_backward_bits_frozen() {
    let mut rng = RngState::new(20_240_001);
    let input = random_tensor(&[33, 29, 3], &mut rng);
    let kernels = random_tensor(&[3, 3, 3, 8], &mut rng);
    let bias = random_tensor(&[8], &mut rng);

    let out = conv2d(&input, &kernels, &bias, Padding::Same).unwrap();
    assert_eq!(bits_hash(out.data()), FROZEN_CONV_FORWARD);

    let grads = conv2d_backward(&input, &kernels, &out, Padding::Same).unwrap();
    assert_eq!(bits_hash(grads.input_grad.data()), FROZEN_CONV_INPUT_GRAD);
    assert_eq!(
        bits_hash(grads.param("kernels").unwrap().data()),
        FROZEN_CONV_KERNEL_GRAD
    );
}

#[test]
fn model_forward_bits_frozen() {
    let mut rng = RngState::new(77_001);
    let model = build_cnn3([32, 32, 1], 3, &mut rng).unwrap();
    let batch = random_tensor(&[5, 32, 32, 1], &mut rng);
    let probs = forward(&model, &batch).unwrap();
    assert_eq!(bits_hash(probs.data()), FROZEN_MODEL_FORWARD);
}

const FROZEN_CONV_FORWARD: u64 = 7358714214450511419;
const FROZEN_CONV_INPUT_GRAD: u64 = 3987478158253255389;
const FROZEN_CONV_KERNEL_GRAD: u64 = 7188797476792341083;
const FROZEN_MODEL_FORWARD: u64 = 10688914601426260133;
