//! Cross-channel local response normalization.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnSpec {
    pub k: f32,
    pub alpha: f32,
    pub beta: f32,
    /// Odd number of neighbouring channels summed over, centred on the
    /// channel being normalized.
    pub window: usize,
}

impl Default for LrnSpec {
    fn default() -> Self {
        Self {
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
            window: 5,
        }
    }
}

impl LrnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(arg_err!("lrn window {} must be odd and positive", self.window));
        }
        if !(self.k > 0.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(arg_err!("lrn constants out of range: {self:?}"));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        self.window / 2
    }
}

/// `k + alpha * sum_{j in window(c)} x_j^2` for every element.
fn denominators(x: &[f32], channels: usize, spec: &LrnSpec) -> Vec<f32> {
    let half = spec.half();
    let mut out = vec![0.0f32; x.len()];
    for (px, dpx) in x.chunks_exact(channels).zip(out.chunks_exact_mut(channels)) {
        for c in 0..channels {
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(channels - 1);
            let s: f32 = px[lo..=hi].iter().map(|v| v * v).sum();
            dpx[c] = spec.k + spec.alpha * s;
        }
    }
    out
}

pub fn lrn(input: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    spec.validate()?;
    let (_, _, c) = input.hwc()?;
    let d = denominators(input.data(), c, spec);
    let data = input
        .data()
        .iter()
        .zip(&d)
        .map(|(x, d)| x * d.powf(-spec.beta))
        .collect();
    Tensor::new(input.shape(), data)
}

pub fn lrn_backward(upstream: &Tensor, input: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    spec.validate()?;
    upstream.ensure_same_shape(input)?;
    let (_, _, channels) = input.hwc()?;
    let half = spec.half();
    let x = input.data();
    let d = denominators(x, channels, spec);
    let g = upstream.data();
    let mut out = vec![0.0f32; x.len()];
    let coef = -2.0 * spec.alpha * spec.beta;
    for base in (0..x.len()).step_by(channels) {
        // t_c = g_c * x_c * d_c^(-beta-1)
        let t: Vec<f32> = (0..channels)
            .map(|c| g[base + c] * x[base + c] * d[base + c].powf(-spec.beta - 1.0))
            .collect();
        for j in 0..channels {
            let lo = j.saturating_sub(half);
            let hi = (j + half).min(channels - 1);
            let cross: f32 = t[lo..=hi].iter().sum();
            out[base + j] =
                g[base + j] * d[base + j].powf(-spec.beta) + coef * x[base + j] * cross;
        }
    }
    Tensor::new(input.shape(), out)
}
