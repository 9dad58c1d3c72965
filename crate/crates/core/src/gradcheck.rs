//! Central finite-difference verification of analytic gradients.
//!
//! Whole-model checks evaluate the objective with an independent
//! double-precision forward pass in which every ReLU mask and pooling choice
//! is held at the value it took at the evaluation point. The perturbed
//! function is then smooth, and f64 arithmetic keeps rounding noise far
//! below the difference being measured, so the comparison isolates the
//! chain rule implemented by the f32 backward pass.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::models::network::Frozen;
use crate::models::{self, ActivationPattern, ArchitectureSpec, LayerSpec, ModelParams, Variant};
use crate::ops::{self, Mode};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f32 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per parameter block, in block order.
    pub block_errors: Vec<(String, f64)>,
    pub coordinates_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks `analytic` against central differences of `loss` over a random
/// subset of `coords` entries of `x`. Returns the worst relative error.
pub fn check_tensor<F, R>(
    x: &mut Tensor,
    analytic: &Tensor,
    coords: usize,
    h: f32,
    rng: &mut R,
    mut loss: F,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
    R: Rng + ?Sized,
{
    x.ensure_same_shape(analytic)?;
    let picks = sample(rng, x.len(), coords.min(x.len()));
    let mut worst = 0.0f64;
    for i in picks {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = loss(x)?;
        x.data_mut()[i] = orig - h;
        let minus = loss(x)?;
        x.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at coordinate {i}")));
        }
        let step = ((orig + h) as f64) - ((orig - h) as f64);
        let numeric = (plus - minus) / step;
        worst = worst.max(relative_error(analytic.data()[i] as f64, numeric));
    }
    Ok(worst)
}

/// Coordinates per block: as even as possible, every block gets at least
/// one, and small blocks hand their unused share to larger ones.
fn spread(blocks: &[(String, usize)], coords: usize) -> Vec<usize> {
    let mut counts = vec![0usize; blocks.len()];
    let target = coords.max(blocks.len());
    let mut assigned = 0;
    loop {
        let mut progressed = false;
        for (c, (_, len)) in counts.iter_mut().zip(blocks) {
            if assigned < target && *c < *len {
                *c += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed || assigned >= target {
            return counts;
        }
    }
}

/// Finite-difference check over f32 model parameters. `loss` evaluates the
/// objective for the current parameter values; `analytic` holds its
/// gradient. Coordinates are spread over blocks as evenly as their sizes allow.
pub fn finite_diff_check<F>(
    params: &mut ModelParams,
    analytic: &ModelParams,
    coords: usize,
    h: f32,
    seed: u64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if params.is_empty() {
        return Err(arg_err!("no parameters to check"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<(String, usize)> = params.iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let per_block = spread(&blocks, coords);
    let mut block_errors = Vec::with_capacity(blocks.len());
    let mut checked = 0;
    for ((name, len), n) in blocks.into_iter().zip(per_block) {
        let mut worst = 0.0f64;
        for i in sample(&mut rng, len, n) {
            let orig = params.get(&name)?.data()[i];
            params.get_mut(&name)?.data_mut()[i] = orig + h;
            let plus = loss(params);
            params.get_mut(&name)?.data_mut()[i] = orig - h;
            let minus = loss(params);
            params.get_mut(&name)?.data_mut()[i] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {name}[{i}]"
                )));
            }
            let step = ((orig + h) as f64) - ((orig - h) as f64);
            let a = analytic.get(&name)?.data()[i] as f64;
            worst = worst.max(relative_error(a, (plus - minus) / step));
            checked += 1;
        }
        block_errors.push((name, worst));
    }
    Ok(report(block_errors, checked))
}

fn report(block_errors: Vec<(String, f64)>, checked: usize) -> GradCheckReport {
    GradCheckReport {
        max_relative_error: block_errors.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        block_errors,
        coordinates_checked: checked,
    }
}

/// Analytic gradient of the inference-mode cross-entropy of one stack,
/// together with the activation pattern at that point.
pub fn model_gradient(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    label: usize,
) -> Result<(f64, ModelParams, ActivationPattern)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, trace) = models::forward_traced(spec, params, frames, Mode::Infer, &mut rng)?;
    let out = ops::softmax_cross_entropy(&logits, label)?;
    let mut grads = params.zeros_like();
    models::backward(spec, params, &trace, &out.logit_grad, &mut grads, false)?;
    Ok((out.loss, grads, trace.pattern()))
}

/// Full-model check of the backward pass against the frozen-pattern f64
/// reference objective.
pub fn check_model(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    frames: &[Tensor],
    label: usize,
    coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (loss32, analytic, pattern) = model_gradient(spec, params, frames, label)?;
    if !loss32.is_finite() {
        return Err(Error::Numeric("non-finite loss at evaluation point".into()));
    }
    let reference = Reference::new(spec, &pattern, frames, label)?;
    let mut p64: BTreeMap<String, Vec<f64>> = params
        .iter()
        .map(|(n, t)| (n.clone(), t.data().iter().map(|&v| v as f64).collect()))
        .collect();
    let h = DEFAULT_STEP as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<(String, usize)> = p64.iter().map(|(n, v)| (n.clone(), v.len())).collect();
    let per_block = spread(&blocks, coords);
    // A perturbation only changes the tower that owns the block, so the
    // other towers' features are computed once.
    let base = reference.towers(&p64)?;
    let loss = |p: &BTreeMap<String, Vec<f64>>, tower: Option<usize>| -> Result<f64> {
        match tower {
            Some(k) => {
                let mut t = base.clone();
                t[k] = reference.tower(k, p)?;
                reference.head(&t, p)
            }
            None => reference.head(&base, p),
        }
    };
    let mut block_errors = Vec::with_capacity(blocks.len());
    let mut checked = 0;
    for ((name, len), n) in blocks.into_iter().zip(per_block) {
        let tower = reference.tower_of(&name);
        let mut worst = 0.0f64;
        for i in sample(&mut rng, len, n) {
            let orig = p64[&name][i];
            p64.get_mut(&name).expect("block")[i] = orig + h;
            let plus = loss(&p64, tower)?;
            p64.get_mut(&name).expect("block")[i] = orig - h;
            let minus = loss(&p64, tower)?;
            p64.get_mut(&name).expect("block")[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {name}[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(&name)?.data()[i] as f64;
            worst = worst.max(relative_error(a, numeric));
            checked += 1;
        }
        block_errors.push((name, worst));
    }
    Ok(report(block_errors, checked))
}

/// f64 feature map.
struct Map {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

/// Independent double-precision evaluator of a network whose piecewise
/// choices are fixed by an [`ActivationPattern`].
struct Reference<'a> {
    spec: &'a ArchitectureSpec,
    pattern: &'a ActivationPattern,
    inputs: Vec<Map>,
    namespaces: Vec<String>,
    label: usize,
}

impl<'a> Reference<'a> {
    fn new(
        spec: &'a ArchitectureSpec,
        pattern: &'a ActivationPattern,
        frames: &[Tensor],
        label: usize,
    ) -> Result<Self> {
        let to_map = |t: &Tensor| -> Result<Map> {
            let (h, w, c) = t.hwc()?;
            Ok(Map {
                h,
                w,
                c,
                data: t.data().iter().map(|&v| v as f64).collect(),
            })
        };
        let inputs = match spec.variant {
            Variant::EarlyIntegration => {
                let refs: Vec<&Tensor> = frames.iter().collect();
                vec![to_map(&Tensor::concat_channels(&refs)?)?]
            }
            _ => frames.iter().map(to_map).collect::<Result<_>>()?,
        };
        Ok(Self {
            spec,
            pattern,
            inputs,
            namespaces: spec.tower_namespaces(),
            label,
        })
    }

    /// Index of the tower that owns parameter block `name`, if any.
    fn tower_of(&self, name: &str) -> Option<usize> {
        self.namespaces
            .iter()
            .position(|ns| name.strip_prefix(ns.as_str()).is_some_and(|r| r.starts_with('.')))
    }

    fn tower(&self, k: usize, p: &BTreeMap<String, Vec<f64>>) -> Result<Vec<f64>> {
        let (input, ns, frozen) = (&self.inputs[k], &self.namespaces[k], &self.pattern.towers[k]);
        let mut x = Map {
            h: input.h,
            w: input.w,
            c: input.c,
            data: input.data.clone(),
        };
        for (i, layer) in self.spec.tower.iter().enumerate() {
            x = match (layer, &frozen[i]) {
                (LayerSpec::Conv { kernel, stride, pad, filters }, _) => conv64(
                    &x,
                    &p[&format!("{ns}.{i}.weight")],
                    &p[&format!("{ns}.{i}.bias")],
                    *kernel,
                    *filters,
                    *stride,
                    *pad,
                ),
                (LayerSpec::Relu, Frozen::Relu(mask)) => Map {
                    data: x.data.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect(),
                    ..x
                },
                (LayerSpec::Lrn { spec: lrn }, _) => lrn64(x, lrn),
                (LayerSpec::MaxPool { size, stride }, Frozen::Pool(argmax)) => Map {
                    h: (x.h - size) / stride + 1,
                    w: (x.w - size) / stride + 1,
                    c: x.c,
                    data: argmax.iter().map(|&j| x.data[j]).collect(),
                },
                (LayerSpec::Dropout { .. }, _) => x,
                _ => return Err(dim_err!("pattern does not match spec")),
            };
        }
        Ok(x.data)
    }

    fn towers(&self, p: &BTreeMap<String, Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        (0..self.inputs.len()).map(|k| self.tower(k, p)).collect()
    }

    /// Loss with `towers` as the per-tower features.
    fn head(&self, towers: &[Vec<f64>], p: &BTreeMap<String, Vec<f64>>) -> Result<f64> {
        let features = towers.concat();
        let mut v = features;
        for (i, layer) in self.spec.head.iter().enumerate() {
            v = match (layer, &self.pattern.head[i]) {
                (LayerSpec::Dense { units }, _) => {
                    let w = &p[&format!("head.{i}.weight")];
                    let b = &p[&format!("head.{i}.bias")];
                    let mut out = b.clone();
                    for (r, &xv) in v.iter().enumerate() {
                        for (o, &wv) in out.iter_mut().zip(&w[r * units..(r + 1) * units]) {
                            *o += xv * wv;
                        }
                    }
                    out
                }
                (LayerSpec::Relu, Frozen::Relu(mask)) => {
                    v.iter().zip(mask).map(|(&a, &m)| if m { a } else { 0.0 }).collect()
                }
                (LayerSpec::Dropout { .. }, _) => v,
                _ => return Err(dim_err!("pattern does not match spec")),
            };
        }
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = v.iter().map(|&l| (l - max).exp()).sum();
        Ok(z.ln() - (v[self.label] - max))
    }
}

fn conv64(
    x: &Map,
    w: &[f64],
    b: &[f64],
    k: usize,
    f: usize,
    stride: usize,
    pad: usize,
) -> Map {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let pl = k * k * x.c;
    let mut cols = vec![0.0f64; oh * ow * pl];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * pl..][..pl];
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                        continue;
                    }
                    let src = (iy as usize * x.w + ix as usize) * x.c;
                    let dst = (ky * k + kx) * x.c;
                    row[dst..dst + x.c].copy_from_slice(&x.data[src..src + x.c]);
                }
            }
        }
    }
    let mut out: Vec<f64> = (0..oh * ow).flat_map(|_| b.iter().copied()).collect();
    // SAFETY: all three buffers are sized exactly for the strides given.
    unsafe {
        matrixmultiply::dgemm(
            oh * ow,
            pl,
            f,
            1.0,
            cols.as_ptr(),
            pl as isize,
            1,
            w.as_ptr(),
            f as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            f as isize,
            1,
        );
    }
    Map {
        h: oh,
        w: ow,
        c: f,
        data: out,
    }
}

fn lrn64(x: Map, spec: &ops::LrnSpec) -> Map {
    let half = spec.window / 2;
    let c = x.c;
    let mut out = vec![0.0f64; x.data.len()];
    for (px, o) in x.data.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        for ch in 0..c {
            let lo = ch.saturating_sub(half);
            let hi = (ch + half).min(c - 1);
            let s: f64 = px[lo..=hi].iter().map(|v| v * v).sum();
            o[ch] = px[ch] / (spec.k as f64 + spec.alpha as f64 * s).powf(spec.beta as f64);
        }
    }
    Map { data: out, ..x }
}

/// Linear probe `sum_i r_i * y_i` accumulated in f64; its gradient with
/// respect to `y` is `r`.
fn probe(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Checks every layer's backward pass with up to `coords` coordinates per
/// gradient. Inputs keep ReLU and max-pool kinks out of reach of the step.
/// Returns the worst relative error per check.
pub fn layer_suite(coords: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    use rand::seq::SliceRandom;
    let h = DEFAULT_STEP;
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    for (stride, pad) in [(1, 1), (2, 0)] {
        let mut x = Tensor::uniform(&[7, 6, 3], 1.0, &mut g);
        let mut k = Tensor::uniform(&[3, 3, 3, 4], 1.0, &mut g);
        let mut b = Tensor::uniform(&[4], 1.0, &mut g);
        let r = Tensor::uniform(ops::conv2d(&x, &k, &b, stride, pad)?.shape(), 1.0, &mut g);
        let grads = ops::conv2d_backward(&r, &x, &k, stride, pad)?;
        let (k0, b0, x0) = (k.clone(), b.clone(), x.clone());
        let e = check_tensor(&mut x, &grads.input, coords, h, &mut g, |x| {
            Ok(probe(&ops::conv2d(x, &k0, &b0, stride, pad)?, &r))
        })?;
        out.push((format!("conv{stride}/{pad} input"), e));
        let e = check_tensor(&mut k, &grads.kernels, coords, h, &mut g, |k| {
            Ok(probe(&ops::conv2d(&x0, k, &b0, stride, pad)?, &r))
        })?;
        out.push((format!("conv{stride}/{pad} kernels"), e));
        let e = check_tensor(&mut b, &grads.bias, coords, h, &mut g, |b| {
            Ok(probe(&ops::conv2d(&x0, &k0, b, stride, pad)?, &r))
        })?;
        out.push((format!("conv{stride}/{pad} bias"), e));
    }

    let lrn = ops::LrnSpec::default();
    let mut x = Tensor::uniform(&[4, 4, 16], 1.0, &mut g);
    let r = Tensor::uniform(x.shape(), 1.0, &mut g);
    let an = ops::lrn_backward(&r, &x, &lrn)?;
    let e = check_tensor(&mut x, &an, coords, h, &mut g, |x| Ok(probe(&ops::lrn(x, &lrn)?, &r)))?;
    out.push(("lrn input".into(), e));

    let mut x = Tensor::uniform(&[20], 1.0, &mut g);
    let mut w = Tensor::uniform(&[20, 15], 1.0, &mut g);
    let mut b = Tensor::uniform(&[15], 1.0, &mut g);
    let r = Tensor::uniform(&[15], 1.0, &mut g);
    let grads = ops::dense_backward(&r, &x, &w)?;
    let (x0, w0, b0) = (x.clone(), w.clone(), b.clone());
    let e = check_tensor(&mut x, &grads.input, coords, h, &mut g, |x| Ok(probe(&ops::dense(x, &w0, &b0)?, &r)))?;
    out.push(("dense input".into(), e));
    let e = check_tensor(&mut w, &grads.weights, coords, h, &mut g, |w| Ok(probe(&ops::dense(&x0, w, &b0)?, &r)))?;
    out.push(("dense weights".into(), e));
    let e = check_tensor(&mut b, &grads.bias, coords, h, &mut g, |b| Ok(probe(&ops::dense(&x0, &w0, b)?, &r)))?;
    out.push(("dense bias".into(), e));

    let mut x = Tensor::uniform(&[10, 10, 3], 1.0, &mut g);
    for v in x.data_mut() {
        *v = v.signum() * (0.05 + v.abs());
    }
    let r = Tensor::uniform(x.shape(), 1.0, &mut g);
    let an = ops::relu_backward(&r, &x)?;
    let e = check_tensor(&mut x, &an, coords, h, &mut g, |x| Ok(probe(&ops::relu(x), &r)))?;
    out.push(("relu input".into(), e));

    let mut vals: Vec<f32> = (0..11 * 11 * 3).map(|i| i as f32 * 0.05 - 18.0).collect();
    vals.shuffle(&mut g);
    let mut x = Tensor::new(&[11, 11, 3], vals)?;
    let pooled = ops::maxpool_with_argmax(&x, 3, 2)?;
    let r = Tensor::uniform(pooled.output.shape(), 1.0, &mut g);
    let an = ops::maxpool_backward(&r, &pooled.argmax, x.shape())?;
    let e = check_tensor(&mut x, &an, coords, h, &mut g, |x| Ok(probe(&ops::maxpool(x, 3, 2)?, &r)))?;
    out.push(("maxpool input".into(), e));

    let mask_seed = g.random::<u64>();
    let mut x = Tensor::uniform(&[coords.max(1)], 1.0, &mut g);
    let r = Tensor::uniform(x.shape(), 1.0, &mut g);
    let (_, mask) = ops::dropout(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
    let an = ops::dropout_backward(&r, mask.as_ref())?;
    let e = check_tensor(&mut x, &an, coords, h, &mut g, |x| {
        let (y, _) = ops::dropout(x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
        Ok(probe(&y, &r))
    })?;
    out.push(("dropout input".into(), e));

    let mut logits = Tensor::uniform(&[10], 3.0, &mut g);
    let sm = ops::softmax_cross_entropy(&logits, 4)?;
    let e = check_tensor(&mut logits, &sm.logit_grad, coords, h, &mut g, |l| {
        Ok(ops::softmax_cross_entropy(l, 4)?.loss)
    })?;
    out.push(("softmax cross-entropy".into(), e));
    Ok(out)
}
