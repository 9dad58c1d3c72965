//! Finite-difference checks for every layer's backward pass.

use pixmimic_core::gradcheck::check_tensor;
use pixmimic_core::ops::*;
use pixmimic_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const COORDS: usize = 200;
const H: f32 = 1e-2;
const TOL: f64 = 1e-2;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Linear probe `sum_i r_i * y_i` accumulated in f64.
fn probe(y: &Tensor, r: &Tensor) -> f64 {
    y.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

#[test]
fn conv_input_kernel_bias() {
    let mut g = rng(1);
    for (stride, pad) in [(1, 1), (2, 0), (2, 1)] {
        let mut x = Tensor::uniform(&[7, 6, 3], 1.0, &mut g);
        let mut k = Tensor::uniform(&[3, 3, 3, 4], 1.0, &mut g);
        let mut b = Tensor::uniform(&[4], 1.0, &mut g);
        let y = conv2d(&x, &k, &b, stride, pad).unwrap();
        let r = Tensor::uniform(y.shape(), 1.0, &mut g);
        let grads = conv2d_backward(&r, &x, &k, stride, pad).unwrap();

        let (k0, b0) = (k.clone(), b.clone());
        let e = check_tensor(&mut x, &grads.input, COORDS, H, &mut g, |x| {
            Ok(probe(&conv2d(x, &k0, &b0, stride, pad)?, &r))
        })
        .unwrap();
        assert!(e < TOL, "conv input grad error {e}");

        let x0 = x.clone();
        let e = check_tensor(&mut k, &grads.kernels, COORDS, H, &mut g, |k| {
            Ok(probe(&conv2d(&x0, k, &b0, stride, pad)?, &r))
        })
        .unwrap();
        assert!(e < TOL, "conv kernel grad error {e}");

        let k1 = k.clone();
        let e = check_tensor(&mut b, &grads.bias, COORDS, H, &mut g, |b| {
            Ok(probe(&conv2d(&x0, &k1, b, stride, pad)?, &r))
        })
        .unwrap();
        assert!(e < TOL, "conv bias grad error {e}");
    }
}

#[test]
fn lrn_input() {
    let mut g = rng(2);
    let spec = LrnSpec::default();
    let mut x = Tensor::uniform(&[4, 4, 8], 1.0, &mut g);
    let r = Tensor::uniform(x.shape(), 1.0, &mut g);
    let an = lrn_backward(&r, &x, &spec).unwrap();
    let e = check_tensor(&mut x, &an, COORDS, H, &mut g, |x| Ok(probe(&lrn(x, &spec)?, &r)))
        .unwrap();
    assert!(e < TOL, "lrn error {e}");

    // Large alpha so the cross-channel term matters.
    let strong = LrnSpec {
        k: 1.0,
        alpha: 0.5,
        beta: 0.75,
        window: 3,
    };
    let mut x = Tensor::uniform(&[3, 3, 6], 1.0, &mut g);
    let an = lrn_backward(&Tensor::uniform(x.shape(), 1.0, &mut rng(9)), &x, &strong).unwrap();
    let r = Tensor::uniform(x.shape(), 1.0, &mut rng(9));
    let e = check_tensor(&mut x, &an, COORDS, H, &mut g, |x| {
        Ok(probe(&lrn(x, &strong)?, &r))
    })
    .unwrap();
    assert!(e < TOL, "strong lrn error {e}");
}

#[test]
fn dense_all() {
    let mut g = rng(3);
    let mut x = Tensor::uniform(&[20], 1.0, &mut g);
    let mut w = Tensor::uniform(&[20, 15], 1.0, &mut g);
    let b = Tensor::uniform(&[15], 1.0, &mut g);
    let r = Tensor::uniform(&[15], 1.0, &mut g);
    let grads = dense_backward(&r, &x, &w).unwrap();
    let (w0, b0) = (w.clone(), b.clone());
    let e = check_tensor(&mut x, &grads.input, COORDS, H, &mut g, |x| {
        Ok(probe(&dense(x, &w0, &b0)?, &r))
    })
    .unwrap();
    assert!(e < TOL, "dense input {e}");
    let x0 = x.clone();
    let e = check_tensor(&mut w, &grads.weights, COORDS, H, &mut g, |w| {
        Ok(probe(&dense(&x0, w, &b0)?, &r))
    })
    .unwrap();
    assert!(e < TOL, "dense weights {e}");
}

#[test]
fn softmax_logits() {
    let mut g = rng(4);
    let mut logits = Tensor::uniform(&[30], 3.0, &mut g);
    let out = softmax_cross_entropy(&logits, 7).unwrap();
    let e = check_tensor(&mut logits, &out.logit_grad, 30, H, &mut g, |l| {
        Ok(softmax_cross_entropy(l, 7)?.loss)
    })
    .unwrap();
    assert!(e < 1e-3, "softmax error {e}");
}

/// Values bounded away from zero by more than the step, so no ReLU kink lies
/// inside a central difference.
fn away_from_zero(shape: &[usize], g: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::uniform(shape, 1.0, g);
    for v in t.data_mut() {
        *v = v.signum() * (0.05 + v.abs());
    }
    t
}

#[test]
fn relu_input() {
    let mut g = rng(5);
    let mut x = away_from_zero(&[6, 6, 4], &mut g);
    let r = Tensor::uniform(x.shape(), 1.0, &mut g);
    let an = relu_backward(&r, &x).unwrap();
    let e = check_tensor(&mut x, &an, COORDS, H, &mut g, |x| Ok(probe(&relu(x), &r))).unwrap();
    assert!(e < TOL, "relu error {e}");
}

#[test]
fn maxpool_input() {
    use rand::seq::SliceRandom;
    let mut g = rng(6);
    // Distinct values spaced well beyond 2h, so perturbing one entry never
    // changes which element wins its (overlapping) window.
    let n = 9 * 9 * 3;
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.05 - 10.0).collect();
    vals.shuffle(&mut g);
    let mut x = Tensor::new(&[9, 9, 3], vals).unwrap();
    for (size, stride) in [(3, 2), (2, 2)] {
        let out = maxpool_with_argmax(&x, size, stride).unwrap();
        let r = Tensor::uniform(out.output.shape(), 1.0, &mut g);
        let an = maxpool_backward(&r, &out.argmax, x.shape()).unwrap();
        let e = check_tensor(&mut x, &an, COORDS, H, &mut g, |x| {
            Ok(probe(&maxpool(x, size, stride)?, &r))
        })
        .unwrap();
        assert!(e < TOL, "maxpool {size}/{stride} error {e}");
    }
}

#[test]
fn dropout_input_with_fixed_mask() {
    let mut g = rng(7);
    let mut x = Tensor::uniform(&[300], 1.0, &mut g);
    let r = Tensor::uniform(&[300], 1.0, &mut g);
    let (_, mask) = dropout(&x, 0.5, Mode::Train, &mut rng(70)).unwrap();
    let an = dropout_backward(&r, mask.as_ref()).unwrap();
    // Reseeding reproduces the mask, making the layer linear in x.
    let e = check_tensor(&mut x, &an, COORDS, H, &mut g, |x| {
        Ok(probe(&dropout(x, 0.5, Mode::Train, &mut rng(70))?.0, &r))
    })
    .unwrap();
    assert!(e < TOL, "dropout error {e}");
}
