use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    upstream.ensure_same_shape(input)?;
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

/// Per-element multipliers drawn by a training-mode dropout pass.
#[derive(Clone, Debug)]
pub struct DropoutMask(Vec<f32>);

/// Inverted dropout: in training each element is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 - p)`; inference is the identity.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    p: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(arg_err!("dropout probability {p} outside [0, 1)"));
    }
    if mode == Mode::Infer || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..input.len())
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape(), data)?, Some(DropoutMask(mask))))
}

pub fn dropout_backward(upstream: &Tensor, mask: Option<&DropoutMask>) -> Result<Tensor> {
    let Some(DropoutMask(mask)) = mask else {
        return Ok(upstream.clone());
    };
    if mask.len() != upstream.len() {
        return Err(crate::error::dim_err!("dropout mask length mismatch"));
    }
    let data = upstream.data().iter().zip(mask).map(|(g, m)| g * m).collect();
    Tensor::new(upstream.shape(), data)
}
