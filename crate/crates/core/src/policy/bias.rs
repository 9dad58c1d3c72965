use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::evaluator::{argmax, ConfusionMatrix};

pub const B_MIN: f64 = 0.01;
pub const DEFAULT_ROUNDS: usize = 10;
/// Per-round damping exponent.
pub const DAMPING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Computed,
    ManualOverride,
}

/// Per-class multipliers applied to softmax scores before top-k selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVector {
    pub b: Vec<f64>,
    pub provenance: Provenance,
    /// Set when the validation predictions were all one class and the
    /// balancing could not run.
    #[serde(default)]
    pub degenerate: bool,
}

impl BiasVector {
    pub fn ones(classes: usize) -> Self {
        Self {
            b: vec![1.0; classes],
            provenance: Provenance::Computed,
            degenerate: false,
        }
    }

    pub fn manual(b: Vec<f64>) -> Result<Self> {
        let v = Self {
            b,
            provenance: Provenance::ManualOverride,
            degenerate: false,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.iter().any(|&v| !v.is_finite() || !(B_MIN..=1.0).contains(&v)) {
            return Err(arg_err!("bias entries must lie in [{B_MIN}, 1]"));
        }
        Ok(())
    }

    /// Class name to multiplier, for the JSON file shared by live runs and
    /// evaluations.
    pub fn to_named(&self, names: &[&str]) -> BTreeMap<String, f64> {
        names.iter().map(|n| n.to_string()).zip(self.b.iter().copied()).collect()
    }

    pub fn from_named(map: &BTreeMap<String, f64>, names: &[&str]) -> Result<Self> {
        let b = names
            .iter()
            .map(|n| map.get(*n).copied().ok_or_else(|| arg_err!("bias for class {n} missing")))
            .collect::<Result<Vec<_>>>()?;
        if map.len() != names.len() {
            return Err(arg_err!("bias file names unknown classes"));
        }
        Self::manual(b)
    }

    pub fn apply(&self, scores: &[f32]) -> Vec<f64> {
        scores.iter().zip(&self.b).map(|(&s, &b)| s as f64 * b).collect()
    }
}

/// Argmax confusion of biased scores.
pub fn biased_confusion(scores: &[Vec<f32>], labels: &[usize], bias: &BiasVector) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        bias.len(),
        scores.iter().zip(labels).map(|(s, &y)| {
            let biased: Vec<f32> = bias.apply(s).into_iter().map(|v| v as f32).collect();
            (y, argmax(&biased))
        }),
    )
}

/// Max over min per-class false-positive rate, with every false-positive
/// count floored at 1 so classes that are never predicted stay finite.
pub fn fpr_ratio(m: &ConfusionMatrix) -> f64 {
    let rows = m.row_sums();
    let total: u64 = rows.iter().sum();
    let rates: Vec<f64> = m
        .false_positives()
        .iter()
        .zip(&rows)
        .filter(|&(_, &r)| total > r)
        .map(|(&fp, &r)| fp.max(1) as f64 / (total - r) as f64)
        .collect();
    let max = rates.iter().copied().fold(f64::MIN, f64::max);
    let min = rates.iter().copied().fold(f64::MAX, f64::min);
    if rates.is_empty() {
        1.0
    } else {
        max / min
    }
}

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Iteratively shrinks the multipliers of classes that collect more false
/// positives than the median class, on a table of validation softmax scores.
pub fn compute_bias(scores: &[Vec<f32>], labels: &[usize], rounds: usize) -> Result<BiasVector> {
    let classes = scores.first().map_or(0, |s| s.len());
    if classes == 0 || scores.len() != labels.len() {
        return Err(arg_err!("score table and labels disagree"));
    }
    if labels.iter().any(|&y| y >= classes) {
        return Err(arg_err!("label outside the class range"));
    }
    let mut bias = BiasVector::ones(classes);
    let initial = biased_confusion(scores, labels, &bias);
    if initial.column_sums().iter().filter(|&&c| c > 0).count() <= 1 {
        log::warn!("validation predictions are all one class; bias left uniform");
        bias.degenerate = true;
        return Ok(bias);
    }
    for _ in 0..rounds {
        let fp = biased_confusion(scores, labels, &bias).false_positives();
        let med = median(&fp);
        for (b, &f) in bias.b.iter_mut().zip(&fp) {
            *b = (*b * (med / f.max(1) as f64).powf(DAMPING)).clamp(B_MIN, 1.0);
        }
        let top = bias.b.iter().copied().fold(0.0, f64::max);
        for b in &mut bias.b {
            *b = (*b / top).max(B_MIN);
        }
    }
    Ok(bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_table_is_a_fixed_point() {
        // Each class is mistaken for the next exactly once.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for c in 0..4 {
            let mut s = vec![0.1f32; 4];
            s[(c + 1) % 4] = 0.7;
            scores.push(s);
            labels.push(c);
        }
        let b = compute_bias(&scores, &labels, DEFAULT_ROUNDS).unwrap();
        assert_eq!(b.b, vec![1.0; 4]);
    }

    #[test]
    fn degenerate_predictions_flagged() {
        let scores = vec![vec![0.9f32, 0.1]; 5];
        let b = compute_bias(&scores, &[0, 1, 0, 1, 1], 3).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.b, vec![1.0, 1.0]);
    }

    #[test]
    fn named_round_trip() {
        let names = ["A", "B"];
        let b = BiasVector::manual(vec![0.25, 1.0]).unwrap();
        let back = BiasVector::from_named(&b.to_named(&names), &names).unwrap();
        assert_eq!(back, b);
        assert!(BiasVector::manual(vec![0.0, 1.0]).is_err());
    }
}
