//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optimizer state: first/second moment per parameter (allocated lazily on
/// the first step) and the step counter driving bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Defaults beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn new(lr: f32) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected update over `params`, aligned index-for-index with
/// `grads`. Parameter names are carried for error reporting only.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [(String, &mut Tensor)],
    grads: &[Tensor],
) -> Result<()> {
    assert_eq!(params.len(), grads.len(), "param/grad arity");
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        state.v = state.m.clone();
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if !g.all_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of {name}"),
            });
        }
        if p.shape() != g.shape() {
            return Err(Error::shape(
                format!("gradient of {name}"),
                p.shape(),
                g.shape(),
            ));
        }
    }

    state.t += 1;
    let c1 = 1.0 / (1.0 - (state.beta1 as f64).powi(state.t as i32)) as f32;
    let c2 = 1.0 / (1.0 - (state.beta2 as f64).powi(state.t as i32)) as f32;

    for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for ((pv, &gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
            let m_hat = *mv * c1;
            let v_hat = *vv * c2;
            *pv -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f32) -> Tensor {
        Tensor::from_slice(&[value])
    }

    #[test]
    fn zero_gradient_leaves_params_t_increments() {
        let mut state = AdamState::new(0.001);
        let mut p = single(1.5);
        let mut params = vec![("w".to_string(), &mut p)];
        adam_step(&mut state, &mut params, &[single(0.0)]).unwrap();
        drop(params);
        assert_eq!(p.at(&[0]), 1.5);
        assert_eq!(state.step_count(), 1);
    }

    // First step from zero state: m_hat = g, v_hat = g^2, so the update is
    // -lr * g / (|g| + eps) regardless of the gradient's magnitude.
    #[test]
    fn first_step_closed_form() {
        let mut state = AdamState::new(0.001);
        let mut p = single(0.0);
        let mut params = vec![("w".to_string(), &mut p)];
        adam_step(&mut state, &mut params, &[single(0.5)]).unwrap();
        drop(params);
        assert!((p.at(&[0]) + 0.001).abs() < 1e-6, "got {}", p.at(&[0]));
    }

    // With a constant gradient the bias-corrected update magnitude stays
    // at ~lr on every early step.
    #[test]
    fn constant_gradient_steps_stay_near_lr() {
        let mut state = AdamState::new(0.001);
        let mut p = single(0.0);
        let mut prev = 0.0f32;
        for _ in 0..2 {
            let mut params = vec![("w".to_string(), &mut p)];
            adam_step(&mut state, &mut params, &[single(0.5)]).unwrap();
            drop(params);
            let delta = (p.at(&[0]) - prev).abs();
            assert!((delta - 0.001).abs() < 1e-5, "step size {delta}");
            prev = p.at(&[0]);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut state = AdamState::new(0.001);
        let mut p = single(1.0);
        let mut params = vec![("layer3.kernels".to_string(), &mut p)];
        let err = adam_step(&mut state, &mut params, &[single(f32::NAN)]).unwrap_err();
        match err {
            Error::NonFinite { context } => assert!(context.contains("layer3.kernels")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bit_deterministic() {
        let run = || {
            let mut state = AdamState::new(0.01);
            let mut p = Tensor::from_slice(&[1.0f32, -2.0, 0.5]);
            for i in 0..10 {
                let g = Tensor::from_slice(&[0.1 * i as f32, -0.2, 0.3]);
                let mut params = vec![("w".to_string(), &mut p)];
                adam_step(&mut state, &mut params, &[g]).unwrap();
            }
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
