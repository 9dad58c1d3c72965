//! Direct loop implementations used as independent references.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ops::conv2d;
use crate::tensor::Tensor;

/// Direct double-precision convolution over HWC input and `K x K x C x F`
/// kernels. Returns the output shape and values.
pub fn conv2d_oracle(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kk, f) = (k.shape()[0], k.shape()[3]);
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = vec![0.0f64; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            for fo in 0..f {
                let mut acc = b.data()[fo] as f64;
                for ky in 0..kk {
                    for kx in 0..kk {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = x.data()[(iy as usize * w + ix as usize) * c + ci] as f64;
                            let kv = k.data()[((ky * kk + kx) * c + ci) * f + fo] as f64;
                            acc += xv * kv;
                        }
                    }
                }
                out[(oy * ow + ox) * f + fo] = acc;
            }
        }
    }
    (vec![oh, ow, f], out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepOutcome {
    /// Valid shapes compared against the oracle.
    pub cases: usize,
    pub max_abs_error: f64,
    /// Valid shapes whose output shape disagreed, or that were refused.
    pub shape_mismatches: usize,
    /// Kernels larger than the padded input that were wrongly accepted.
    pub accepted_invalid: usize,
}

/// Compares `conv2d` with the oracle on every shape with `H, W <= 8`,
/// `K <= 3`, `C, F <= 3`, stride 1 or 2 and padding 0 or 1.
pub fn conv_sweep(seed: u64) -> SweepOutcome {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SweepOutcome::default();
    for h in 1..=8 {
        for w in 1..=8 {
            for kk in 1..=3 {
                for c in 1..=3 {
                    for f in 1..=3 {
                        for stride in 1..=2 {
                            for pad in 0..=1 {
                                let x = Tensor::uniform(&[h, w, c], 1.0, &mut g);
                                let k = Tensor::uniform(&[kk, kk, c, f], 1.0, &mut g);
                                let b = Tensor::uniform(&[f], 1.0, &mut g);
                                let got = conv2d(&x, &k, &b, stride, pad);
                                if kk > h + 2 * pad || kk > w + 2 * pad {
                                    out.accepted_invalid += got.is_ok() as usize;
                                    continue;
                                }
                                out.cases += 1;
                                let (shape, want) = conv2d_oracle(&x, &k, &b, stride, pad);
                                match got {
                                    Ok(y) if y.shape() == shape.as_slice() => {
                                        for (&a, &e) in y.data().iter().zip(&want) {
                                            out.max_abs_error = out.max_abs_error.max((a as f64 - e).abs());
                                        }
                                    }
                                    _ => out.shape_mismatches += 1,
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
