use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// `out = x^T W + b` for a flattened input of length `N` and `W` of `N x M`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, m) = dims(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    let x = input.data();
    let w = weights.data();
    for (i, &xi) in x.iter().enumerate().take(n) {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * m..(i + 1) * m];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
    Tensor::new(&[m], out)
}

fn dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let (n, m) = match weights.shape()[..] {
        [n, m] => (n, m),
        _ => return Err(dim_err!("dense weights must be 2-D, got {:?}", weights.shape())),
    };
    if input.len() != n {
        return Err(dim_err!("dense: input length {} vs weight rows {n}", input.len()));
    }
    if bias.len() != m {
        return Err(dim_err!("dense: bias length {} vs {m} units", bias.len()));
    }
    Ok((n, m))
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(upstream: &Tensor, input: &Tensor, weights: &Tensor) -> Result<DenseGrads> {
    let mut wg = Tensor::zeros(weights.shape());
    let mut bg = Tensor::zeros(&[weights.shape()[1]]);
    let ig = dense_backward_accumulate(upstream, input, weights, &mut wg, &mut bg, true)?
        .expect("input gradient requested");
    Ok(DenseGrads {
        input: ig,
        weights: wg,
        bias: bg,
    })
}

/// Accumulates weight and bias gradients; optionally returns the input
/// gradient shaped like `input`.
pub fn dense_backward_accumulate(
    upstream: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    weight_grad: &mut Tensor,
    bias_grad: &mut Tensor,
    want_input: bool,
) -> Result<Option<Tensor>> {
    let (n, m) = match weights.shape()[..] {
        [n, m] => (n, m),
        _ => return Err(dim_err!("dense weights must be 2-D")),
    };
    if upstream.len() != m || input.len() != n {
        return Err(dim_err!(
            "dense backward: upstream {} / input {} vs weights {n}x{m}",
            upstream.len(),
            input.len()
        ));
    }
    weight_grad.ensure_same_shape(weights)?;
    let g = upstream.data();
    for (b, v) in bias_grad.data_mut().iter_mut().zip(g) {
        *b += v;
    }
    let x = input.data();
    let wg = weight_grad.data_mut();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &gv) in wg[i * m..(i + 1) * m].iter_mut().zip(g) {
            *o += xi * gv;
        }
    }
    if !want_input {
        return Ok(None);
    }
    let w = weights.data();
    let dx: Vec<f32> = (0..n)
        .map(|i| {
            w[i * m..(i + 1) * m]
                .iter()
                .zip(g)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    Ok(Some(Tensor::new(input.shape(), dx)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_arithmetic() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let w = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![3.0, 3.0]);
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[4.0, 5.0]);
        let zb = Tensor::zeros(&[2]);
        assert_eq!(dense(&x, &w, &zb).unwrap().data(), x.data());
    }

    #[test]
    fn mismatched_rows_rejected() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let w = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(dense(&x, &w, &b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn backward_closed_form() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let w = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let up = Tensor::from_vec(vec![1.0, 0.0, -1.0]);
        let g = dense_backward(&up, &x, &w).unwrap();
        assert_eq!(g.input.data(), &[-2.0, -2.0]);
        assert_eq!(g.weights.data(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
        assert_eq!(g.bias.data(), &[1.0, 0.0, -1.0]);
    }
}
