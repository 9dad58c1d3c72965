//! Layers against direct double-precision loop implementations.

use pixmimic_core::ops::*;
use pixmimic_core::oracle::{conv2d_oracle, conv_sweep};
use pixmimic_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_matches_direct_loops_on_every_small_shape() {
    let out = conv_sweep(11);
    assert!(out.cases > 5000, "{out:?}");
    assert_eq!(out.shape_mismatches, 0);
    assert_eq!(out.accepted_invalid, 0);
    assert!(out.max_abs_error <= 1e-5, "{out:?}");
}

#[test]
fn oracle_on_a_hand_computed_case() {
    // 2x2 single-channel input, 2x2 kernel of ones, bias 1: one output.
    let x = Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let k = Tensor::full(&[2, 2, 1, 1], 1.0);
    let b = Tensor::full(&[1], 1.0);
    assert_eq!(conv2d_oracle(&x, &k, &b, 1, 0), (vec![1, 1, 1], vec![11.0]));
    // Padding 1 gives a 3x3 output whose corner sees only one input pixel.
    let (shape, y) = conv2d_oracle(&x, &k, &b, 1, 1);
    assert_eq!(shape, vec![3, 3, 1]);
    assert_eq!((y[0], y[4], y[8]), (2.0, 11.0, 5.0));
}

#[test]
fn lrn_matches_formula() {
    let mut g = ChaCha8Rng::seed_from_u64(12);
    let spec = LrnSpec {
        k: 2.0,
        alpha: 0.3,
        beta: 0.75,
        window: 5,
    };
    let x = Tensor::uniform(&[3, 2, 7], 2.0, &mut g);
    let y = lrn(&x, &spec).unwrap();
    for (px, py) in x.data().chunks(7).zip(y.data().chunks(7)) {
        for c in 0usize..7 {
            let lo = c.saturating_sub(2);
            let hi = (c + 2).min(6);
            let s: f64 = px[lo..=hi].iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
            let want = px[c] as f64 / (2.0f64 + 0.3 * s).powf(0.75);
            assert!((py[c] as f64 - want).abs() < 1e-5, "{} vs {want}", py[c]);
        }
    }
}

#[test]
fn dense_is_affine() {
    let mut g = ChaCha8Rng::seed_from_u64(13);
    let w = Tensor::uniform(&[6, 4], 1.0, &mut g);
    let b = Tensor::uniform(&[4], 1.0, &mut g);
    let x1 = Tensor::uniform(&[6], 1.0, &mut g);
    let x2 = Tensor::uniform(&[6], 1.0, &mut g);
    let mut sum = x1.clone();
    sum.add_assign(&x2).unwrap();
    let y1 = dense(&x1, &w, &b).unwrap();
    let y2 = dense(&x2, &w, &b).unwrap();
    let ys = dense(&sum, &w, &b).unwrap();
    // f(x1 + x2) = f(x1) + f(x2) - b
    for i in 0..4 {
        let want = y1.data()[i] + y2.data()[i] - b.data()[i];
        assert!((ys.data()[i] - want).abs() < 1e-5);
    }
}
