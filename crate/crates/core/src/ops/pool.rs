use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Max pooling output plus the flat input index each output was taken from.
#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn pool_extent(input: usize, size: usize, stride: usize) -> Result<usize> {
    if size == 0 || stride == 0 {
        return Err(dim_err!("pool size and stride must be positive"));
    }
    if input < size {
        return Err(dim_err!("pool size {size} exceeds spatial extent {input}"));
    }
    Ok((input - size) / stride + 1)
}

pub fn maxpool_with_argmax(input: &Tensor, size: usize, stride: usize) -> Result<PoolOutput> {
    let (h, w, c) = input.hwc()?;
    let oh = pool_extent(h, size, stride)?;
    let ow = pool_extent(w, size, stride)?;
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                // Row-major scan visits flat indices in increasing order, so
                // a strict comparison keeps the lowest index on ties.
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = ((oy * stride + ky) * w + ox * stride + kx) * c + ch;
                        if x[idx] > best || best_idx == usize::MAX {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(&[oh, ow, c], out)?,
        argmax,
    })
}

pub fn maxpool(input: &Tensor, size: usize, stride: usize) -> Result<Tensor> {
    Ok(maxpool_with_argmax(input, size, stride)?.output)
}

pub fn maxpool_backward(
    upstream: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    if upstream.len() != argmax.len() {
        return Err(dim_err!(
            "pool backward: {} upstream values for {} windows",
            upstream.len(),
            argmax.len()
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &u) in argmax.iter().zip(upstream.data()) {
        g[idx] += u;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_window() {
        let x = Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool_with_argmax(&x, 2, 2).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        let g = maxpool_backward(&Tensor::from_vec(vec![1.0]), &p.argmax, x.shape()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let x = Tensor::full(&[2, 2, 1], 3.0);
        let p = maxpool_with_argmax(&x, 2, 2).unwrap();
        assert_eq!(p.argmax, vec![0]);
    }

    #[test]
    fn constant_input_and_full_preset_shape() {
        let x = Tensor::full(&[61, 61, 2], 0.25);
        let y = maxpool(&x, 3, 3).unwrap();
        assert_eq!(y.shape(), &[20, 20, 2]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn oversized_window_rejected() {
        let x = Tensor::zeros(&[2, 2, 1]);
        assert!(maxpool(&x, 3, 1).is_err());
    }
}
