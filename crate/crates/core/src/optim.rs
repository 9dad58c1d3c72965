//! Bias-corrected Adam with an L2 penalty folded into the gradient.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Tensor,
    pub v: Tensor,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        Self::with_config(shape, AdamConfig::default())
    }

    pub fn with_config(shape: &[usize], cfg: AdamConfig) -> Self {
        Self {
            step_count: 0,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// One Adam update of `param` in place. The effective gradient is
/// `grad + l2 * param`.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    lr: f64,
    l2: f64,
) -> Result<()> {
    param.ensure_same_shape(grad)?;
    param.ensure_same_shape(&state.m)?;
    param.ensure_same_shape(&state.v)?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let p = param.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        let g = g as f64 + l2 * p[i] as f64;
        let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
        let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let m_hat = mi / c1;
        let v_hat = vi / c2;
        p[i] = (p[i] as f64 - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
    }
    Ok(())
}
