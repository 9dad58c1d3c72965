//! Forward evaluation and reverse-mode gradients for an `ArchitectureSpec`.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::models::params::ModelParams;
use crate::models::spec::{ArchitectureSpec, LayerSpec, Variant};
use crate::ops::{self, DropoutMask, Mode};
use crate::tensor::Tensor;

enum Cache {
    Conv { input: Tensor },
    Relu { input: Tensor },
    Lrn { input: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Tensor },
    Dropout { mask: Option<DropoutMask> },
}

/// Piecewise choices (ReLU masks, pooling argmaxes) made by a reference
/// pass. Replaying them turns the network into a smooth function of its
/// parameters around that point, which is what finite-difference checks of
/// the backward pass need.
#[derive(Clone, Debug)]
pub struct ActivationPattern {
    pub(crate) towers: Vec<Vec<Frozen>>,
    pub(crate) head: Vec<Frozen>,
}

#[derive(Clone, Debug)]
pub(crate) enum Frozen {
    Free,
    Relu(Vec<bool>),
    Pool(Vec<usize>),
}

fn freeze(cache: &[Cache]) -> Vec<Frozen> {
    cache
        .iter()
        .map(|c| match c {
            Cache::Relu { input } => Frozen::Relu(input.data().iter().map(|&v| v > 0.0).collect()),
            Cache::Pool { argmax, .. } => Frozen::Pool(argmax.clone()),
            _ => Frozen::Free,
        })
        .collect()
}

impl Trace {
    pub fn pattern(&self) -> ActivationPattern {
        ActivationPattern {
            towers: self.towers.iter().map(|c| freeze(c)).collect(),
            head: freeze(&self.head),
        }
    }
}

/// Activations retained by a training-mode forward pass.
pub struct Trace {
    towers: Vec<Vec<Cache>>,
    tower_out_shape: Vec<usize>,
    head: Vec<Cache>,
}

fn check_frames(spec: &ArchitectureSpec, frames: &[Tensor]) -> Result<()> {
    let want = spec.frames_consumed();
    if frames.len() != want {
        return Err(dim_err!(
            "{} expects {want} frames, got {}",
            spec.variant,
            frames.len()
        ));
    }
    let (h, w) = spec.input_resolution;
    for (i, f) in frames.iter().enumerate() {
        if f.shape() != [h, w, 3] {
            return Err(dim_err!(
                "frame {i} has shape {:?}, model expects [{h}, {w}, 3]",
                f.shape()
            ));
        }
    }
    Ok(())
}

fn tower_inputs(spec: &ArchitectureSpec, frames: &[Tensor]) -> Result<Vec<Tensor>> {
    Ok(match spec.variant {
        Variant::EarlyIntegration => {
            let refs: Vec<&Tensor> = frames.iter().collect();
            vec![Tensor::concat_channels(&refs)?]
        }
        _ => frames.to_vec(),
    })
}

fn run_tower<R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    ns: &str,
    mut x: Tensor,
    mode: Mode,
    rng: &mut R,
    mut cache: Option<&mut Vec<Cache>>,
) -> Result<Tensor> {
    for (i, layer) in spec.tower.iter().enumerate() {
        let (y, c) = match *layer {
            LayerSpec::Conv { stride, pad, .. } => {
                let w = params.get(&format!("{ns}.{i}.weight"))?;
                let b = params.get(&format!("{ns}.{i}.bias"))?;
                (ops::conv2d(&x, w, b, stride, pad)?, Cache::Conv { input: x })
            }
            LayerSpec::Relu => (ops::relu(&x), Cache::Relu { input: x }),
            LayerSpec::Lrn { spec: lrn } => (ops::lrn(&x, &lrn)?, Cache::Lrn { input: x }),
            LayerSpec::MaxPool { size, stride } => {
                let p = ops::maxpool_with_argmax(&x, size, stride)?;
                (
                    p.output,
                    Cache::Pool {
                        input_shape: x.shape().to_vec(),
                        argmax: p.argmax,
                    },
                )
            }
            LayerSpec::Dropout { p } => {
                let (y, mask) = ops::dropout(&x, p, mode, rng)?;
                (y, Cache::Dropout { mask })
            }
            LayerSpec::Dense { .. } => return Err(dim_err!("dense layer inside tower")),
        };
        if let Some(c_vec) = cache.as_deref_mut() {
            c_vec.push(c);
        }
        x = y;
    }
    Ok(x)
}

fn run_head<R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    mut x: Tensor,
    mode: Mode,
    rng: &mut R,
    mut cache: Option<&mut Vec<Cache>>,
) -> Result<Tensor> {
    for (i, layer) in spec.head.iter().enumerate() {
        let (y, c) = match *layer {
            LayerSpec::Dense { .. } => {
                let w = params.get(&format!("head.{i}.weight"))?;
                let b = params.get(&format!("head.{i}.bias"))?;
                (ops::dense(&x, w, b)?, Cache::Dense { input: x })
            }
            LayerSpec::Relu => (ops::relu(&x), Cache::Relu { input: x }),
            LayerSpec::Dropout { p } => {
                let (y, mask) = ops::dropout(&x, p, mode, rng)?;
                (y, Cache::Dropout { mask })
            }
            _ => return Err(dim_err!("layer {layer:?} not allowed in head")),
        };
        if let Some(c_vec) = cache.as_deref_mut() {
            c_vec.push(c);
        }
        x = y;
    }
    Ok(x)
}

fn flatten_concat(outs: &[Tensor]) -> Tensor {
    let mut data = Vec::with_capacity(outs.iter().map(Tensor::len).sum());
    for o in outs {
        data.extend_from_slice(o.data());
    }
    Tensor::from_vec(data)
}

/// Class logits for one frame stack.
pub fn forward<R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor> {
    check_frames(spec, frames)?;
    let outs = tower_inputs(spec, frames)?
        .into_iter()
        .zip(spec.tower_namespaces())
        .map(|(x, ns)| run_tower(spec, params, &ns, x, mode, rng, None))
        .collect::<Result<Vec<_>>>()?;
    run_head(spec, params, flatten_concat(&outs), mode, rng, None)
}

/// Per-tower output feature maps in inference mode.
pub fn tower_features(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
) -> Result<Vec<Tensor>> {
    check_frames(spec, frames)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    tower_inputs(spec, frames)?
        .into_iter()
        .zip(spec.tower_namespaces())
        .map(|(x, ns)| run_tower(spec, params, &ns, x, Mode::Infer, &mut rng, None))
        .collect()
}

pub fn forward_traced<R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Trace)> {
    check_frames(spec, frames)?;
    let mut towers = Vec::with_capacity(spec.tower_count());
    let mut outs = Vec::with_capacity(spec.tower_count());
    for (x, ns) in tower_inputs(spec, frames)?
        .into_iter()
        .zip(spec.tower_namespaces())
    {
        let mut cache = Vec::with_capacity(spec.tower.len());
        outs.push(run_tower(spec, params, &ns, x, mode, rng, Some(&mut cache))?);
        towers.push(cache);
    }
    let tower_out_shape = outs[0].shape().to_vec();
    let mut head = Vec::with_capacity(spec.head.len());
    let logits = run_head(
        spec,
        params,
        flatten_concat(&outs),
        mode,
        rng,
        Some(&mut head),
    )?;
    Ok((
        logits,
        Trace {
            towers,
            tower_out_shape,
            head,
        },
    ))
}

/// Accumulates parameter gradients into `grads`. With `want_input`, also
/// returns the gradient with respect to each input frame.
pub fn backward(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    trace: &Trace,
    logit_grad: &Tensor,
    grads: &mut ModelParams,
    want_input: bool,
) -> Result<Option<Vec<Tensor>>> {
    let mut g = logit_grad.clone();
    for (i, (layer, cache)) in spec.head.iter().zip(&trace.head).enumerate().rev() {
        g = match (layer, cache) {
            (LayerSpec::Dense { .. }, Cache::Dense { input }) => {
                let w = params.get(&format!("head.{i}.weight"))?;
                let (wg, bg) =
                    grads.pair_mut(&format!("head.{i}.weight"), &format!("head.{i}.bias"))?;
                ops::dense_backward_accumulate(&g, input, w, wg, bg, true)?
                    .expect("input grad requested")
            }
            (LayerSpec::Relu, Cache::Relu { input }) => ops::relu_backward(&g, input)?,
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => {
                ops::dropout_backward(&g, mask.as_ref())?
            }
            _ => unreachable!("trace does not match spec"),
        };
    }

    let per_tower: usize = trace.tower_out_shape.iter().product();
    let mut input_grads = Vec::new();
    for ((cache, ns), chunk) in trace
        .towers
        .iter()
        .zip(spec.tower_namespaces())
        .zip(g.data().chunks_exact(per_tower))
    {
        let mut tg = Tensor::new(&trace.tower_out_shape, chunk.to_vec())?;
        for (i, (layer, c)) in spec.tower.iter().zip(cache).enumerate().rev() {
            let need_input = want_input || i > 0;
            tg = match (layer, c) {
                (LayerSpec::Conv { stride, pad, .. }, Cache::Conv { input }) => {
                    let w = params.get(&format!("{ns}.{i}.weight"))?;
                    let (wg, bg) =
                        grads.pair_mut(&format!("{ns}.{i}.weight"), &format!("{ns}.{i}.bias"))?;
                    match ops::conv2d_backward_accumulate(
                        &tg, input, w, *stride, *pad, wg, bg, need_input,
                    )? {
                        Some(t) => t,
                        None => break,
                    }
                }
                (LayerSpec::Relu, Cache::Relu { input }) => ops::relu_backward(&tg, input)?,
                (LayerSpec::Lrn { spec: lrn }, Cache::Lrn { input }) => {
                    ops::lrn_backward(&tg, input, lrn)?
                }
                (LayerSpec::MaxPool { .. }, Cache::Pool { input_shape, argmax }) => {
                    ops::maxpool_backward(&tg, argmax, input_shape)?
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => {
                    ops::dropout_backward(&tg, mask.as_ref())?
                }
                _ => unreachable!("trace does not match spec"),
            };
        }
        if want_input {
            input_grads.push(tg);
        }
    }
    if !want_input {
        return Ok(None);
    }
    if spec.variant == Variant::EarlyIntegration {
        let joint = input_grads.pop().expect("one tower");
        let (h, w, c) = joint.hwc()?;
        let frames = c / 3;
        let mut split = vec![Vec::with_capacity(h * w * 3); frames];
        for px in joint.data().chunks_exact(c) {
            for (f, dst) in split.iter_mut().enumerate() {
                dst.extend_from_slice(&px[f * 3..f * 3 + 3]);
            }
        }
        input_grads = split
            .into_iter()
            .map(|d| Tensor::new(&[h, w, 3], d))
            .collect::<Result<_>>()?;
    }
    Ok(Some(input_grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::Preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frames(n: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Tensor::uniform(&[h, w, 3], 1.0, &mut rng)).collect()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = ArchitectureSpec::preset(Preset::Compact, Variant::LateIntegration, 10).unwrap();
        let params = ModelParams::zeros(&spec).unwrap();
        let frames = random_frames(4, 64, 64, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = forward(&spec, &params, &frames, Mode::Infer, &mut rng).unwrap();
        assert_eq!(logits.len(), 10);
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_frame_count_rejected() {
        let spec = ArchitectureSpec::preset(Preset::Compact, Variant::LateIntegration, 10).unwrap();
        let params = ModelParams::zeros(&spec).unwrap();
        let frames = random_frames(3, 64, 64, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward(&spec, &params, &frames, Mode::Infer, &mut rng).is_err());
    }

    #[test]
    fn early_with_one_frame_matches_single() {
        let single =
            ArchitectureSpec::with_frames(Preset::Compact, Variant::SingleFrame, 10, 1).unwrap();
        let early =
            ArchitectureSpec::with_frames(Preset::Compact, Variant::EarlyIntegration, 10, 1)
                .unwrap();
        let params = ModelParams::he_uniform(&single, 3).unwrap();
        params.check_against(&early).unwrap();
        let frames = random_frames(1, 64, 64, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = forward(&single, &params, &frames, Mode::Infer, &mut rng).unwrap();
        let b = forward(&early, &params, &frames, Mode::Infer, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn traced_forward_matches_plain() {
        let spec =
            ArchitectureSpec::preset(Preset::Compact, Variant::EarlyIntegration, 10).unwrap();
        let params = ModelParams::he_uniform(&spec, 5).unwrap();
        let frames = random_frames(4, 64, 64, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = forward(&spec, &params, &frames, Mode::Infer, &mut rng).unwrap();
        let (b, _) = forward_traced(&spec, &params, &frames, Mode::Infer, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_input_grads_split_per_frame() {
        let spec =
            ArchitectureSpec::preset(Preset::Compact, Variant::EarlyIntegration, 10).unwrap();
        let params = ModelParams::he_uniform(&spec, 5).unwrap();
        let frames = random_frames(4, 64, 64, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, trace) = forward_traced(&spec, &params, &frames, Mode::Infer, &mut rng).unwrap();
        let mut grads = params.zeros_like();
        let mut lg = Tensor::zeros(&[10]);
        lg.data_mut()[0] = 1.0;
        let ig = backward(&spec, &params, &trace, &lg, &mut grads, true)
            .unwrap()
            .unwrap();
        assert_eq!(ig.len(), 4);
        assert!(ig.iter().all(|t| t.shape() == [64, 64, 3]));
    }
}
