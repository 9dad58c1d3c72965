use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datapipe::INPUT_SCALE;
use crate::error::{arg_err, Result};
use crate::evaluator::argmax;
use crate::models::{backward, forward_traced, ArchitectureSpec, ModelParams};
use crate::ops::Mode;
use crate::tensor::Tensor;

/// Gradients beyond this magnitude saturate the map.
pub fn clip_bound() -> f32 {
    (-9.0f32).exp()
}

pub const SALIENCY_MAX: f32 = 256.0;

/// One color map per input frame, values in `[0, 256]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub class: usize,
    pub maps: Vec<Tensor>,
}

/// Clips to `[-e^-9, e^-9]` and maps that interval affinely onto `[0, 256]`.
pub fn rescale(gradient: f32) -> f32 {
    let e = clip_bound();
    (gradient.clamp(-e, e) + e) / (2.0 * e) * SALIENCY_MAX
}

/// Gradient of the pre-softmax logit of `class` (the predicted class when
/// `None`) with respect to every input pixel of every frame.
pub fn input_gradients(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    class: Option<usize>,
) -> Result<(usize, Vec<Tensor>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, trace) = forward_traced(spec, params, frames, Mode::Infer, &mut rng)?;
    let class = class.unwrap_or_else(|| argmax(logits.data()));
    if class >= logits.len() {
        return Err(arg_err!("class {class} outside the model's {} classes", logits.len()));
    }
    let mut onehot = Tensor::zeros(logits.shape());
    onehot.data_mut()[class] = 1.0;
    let mut scratch = params.zeros_like();
    let mut grads = backward(spec, params, &trace, &onehot, &mut scratch, true)?
        .expect("input gradients requested");
    // Network inputs are pixels times INPUT_SCALE; report per pixel.
    for g in &mut grads {
        g.scale(INPUT_SCALE);
    }
    Ok((class, grads))
}

pub fn saliency(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    class: Option<usize>,
) -> Result<SaliencyMap> {
    let (class, grads) = input_gradients(spec, params, frames, class)?;
    let maps = grads
        .into_iter()
        .map(|g| {
            let data = g.data().iter().map(|&v| rescale(v)).collect();
            Tensor::new(g.shape(), data)
        })
        .collect::<Result<_>>()?;
    Ok(SaliencyMap { class, maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, Preset, Variant};

    #[test]
    fn endpoints_and_midpoint() {
        let e = clip_bound();
        assert_eq!(rescale(0.0), 128.0);
        assert_eq!(rescale(e), 256.0);
        assert_eq!(rescale(10.0 * e), 256.0);
        assert_eq!(rescale(-e), 0.0);
        assert_eq!(rescale(-1.0), 0.0);
    }

    #[test]
    fn zero_model_gives_flat_maps() {
        let (spec, mut params) = build(Preset::Compact, Variant::LateIntegration, 10, 0).unwrap();
        params.fill(0.0);
        let frames: Vec<Tensor> = (0..4).map(|_| Tensor::full(&[64, 64, 3], 0.3)).collect();
        let s = saliency(&spec, &params, &frames, None).unwrap();
        assert_eq!(s.maps.len(), 4);
        assert!(s.maps.iter().all(|m| m.data().iter().all(|&v| v == 128.0)));
    }
}
