use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SoftmaxLoss {
    /// `-ln p[label]`, evaluated in double precision.
    pub loss: f64,
    pub probs: Tensor,
    /// `probs - onehot(label)`.
    pub logit_grad: Tensor,
}

/// Max-shifted softmax probabilities.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    softmax_f64(logits).into_iter().map(|p| p as f32).collect()
}

fn softmax_f64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<SoftmaxLoss> {
    let c = logits.len();
    if label >= c {
        return Err(arg_err!("label {label} out of range for {c} classes"));
    }
    logits.ensure_finite("logits")?;
    let l = logits.data();
    let max = l.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let z: f64 = l.iter().map(|&v| (v as f64 - max).exp()).sum();
    let loss = z.ln() - (l[label] as f64 - max);
    let p = softmax_f64(l);
    let probs = Tensor::new(logits.shape(), p.iter().map(|&v| v as f32).collect())?;
    let grad = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (if i == label { v - 1.0 } else { v }) as f32)
        .collect();
    Ok(SoftmaxLoss {
        loss,
        probs,
        logit_grad: Tensor::new(logits.shape(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let out = softmax_cross_entropy(&Tensor::zeros(&[30]), 4).unwrap();
        assert!((out.loss - 30f64.ln()).abs() < 1e-9);
        assert!((out.loss - 3.4012).abs() < 1e-4);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let out = softmax_cross_entropy(&Tensor::from_vec(vec![1000.0, 0.0]), 0).unwrap();
        assert!(out.loss.abs() < 1e-12);
        assert!(out.probs.data().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn label_out_of_range() {
        let r = softmax_cross_entropy(&Tensor::zeros(&[3]), 3);
        assert!(matches!(r, Err(crate::Error::Argument(_))));
    }
}
