use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{FrameStore, MeanImage, Sample, StackSpec};
use crate::error::{arg_err, Result};
use crate::models::{forward, ArchitectureSpec, ModelParams};
use crate::ops::{softmax, Mode};

/// Inference-mode logits for a list of samples, with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub logits: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.logits.first().map_or(0, |l| l.len())
    }

    /// Softmax scores per sample.
    pub fn scores(&self) -> Vec<Vec<f32>> {
        self.logits.iter().map(|l| softmax(l)).collect()
    }
}

pub fn predict(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    store: &FrameStore,
    samples: &[Sample],
    stack: &StackSpec,
    mean: &MeanImage,
) -> Result<Predictions> {
    // Inference ignores the rng; any seed will do.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut logits = Vec::with_capacity(samples.len());
    for s in samples {
        let frames = store.stack(s, stack, mean)?;
        logits.push(forward(spec, params, &frames, Mode::Infer, &mut rng)?.into_data());
    }
    Ok(Predictions {
        logits,
        labels: samples.iter().map(|s| s.label.id()).collect(),
    })
}

/// Position of `class` when classes are sorted by descending value, ties
/// broken by lower class id.
pub fn rank_of(values: &[f32], class: usize) -> usize {
    let v = values[class];
    values
        .iter()
        .enumerate()
        .filter(|&(i, &x)| x > v || (x == v && i < class))
        .count()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f32]) -> usize {
    (0..values.len())
        .find(|&i| rank_of(values, i) == 0)
        .unwrap_or(0)
}

pub fn top_n_accuracy(preds: &Predictions, n: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(arg_err!("no predictions to score"));
    }
    let hits = preds
        .logits
        .iter()
        .zip(&preds.labels)
        .filter(|(l, &y)| rank_of(l, y) < n)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopN {
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
}

pub fn top_n_summary(preds: &Predictions) -> Result<TopN> {
    Ok(TopN {
        top1: top_n_accuracy(preds, 1)?,
        top3: top_n_accuracy(preds, 3)?,
        top5: top_n_accuracy(preds, 5)?,
    })
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::new(classes);
        for (truth, pred) in pairs {
            m.counts[truth][pred] += 1;
        }
        m
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.classes())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// Label frequencies.
    pub fn priors(&self) -> Vec<f64> {
        let rows = self.row_sums();
        let total: u64 = rows.iter().sum();
        rows.iter()
            .map(|&r| if total == 0 { 0.0 } else { r as f64 / total as f64 })
            .collect()
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Off-diagonal count of each predicted column.
    pub fn false_positives(&self) -> Vec<u64> {
        (0..self.classes())
            .map(|c| {
                self.counts
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| r != c)
                    .map(|(_, row)| row[c])
                    .sum()
            })
            .collect()
    }

    /// `FP_c / (number of samples whose label is not c)`.
    pub fn false_positive_rates(&self) -> Vec<f64> {
        let rows = self.row_sums();
        let total: u64 = rows.iter().sum();
        self.false_positives()
            .iter()
            .zip(&rows)
            .map(|(&fp, &r)| {
                let neg = total - r;
                if neg == 0 {
                    0.0
                } else {
                    fp as f64 / neg as f64
                }
            })
            .collect()
    }
}

/// Argmax confusion of a prediction set.
pub fn confusion(preds: &Predictions) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        preds.class_count(),
        preds.logits.iter().zip(&preds.labels).map(|(l, &y)| (y, argmax(l))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds() -> Predictions {
        Predictions {
            logits: vec![
                vec![3.0, 1.0, 2.0, 0.0, -1.0, -2.0],
                vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![1.0, 5.0, 2.0, 0.0, 0.0, 0.0],
            ],
            labels: vec![2, 3, 1],
        }
    }

    #[test]
    fn nested_top_n() {
        let p = preds();
        let (a1, a3, a5) = (
            top_n_accuracy(&p, 1).unwrap(),
            top_n_accuracy(&p, 3).unwrap(),
            top_n_accuracy(&p, 5).unwrap(),
        );
        assert_eq!(a1, 1.0 / 3.0);
        // Ties go to lower ids: class 3 of an all-zero row ranks fourth.
        assert_eq!(a3, 2.0 / 3.0);
        assert_eq!(a5, 1.0);
    }

    #[test]
    fn monotone_transform_invariance() {
        let p = preds();
        let q = Predictions {
            logits: p
                .logits
                .iter()
                .map(|l| l.iter().map(|&v| (v * 0.5).exp() + 3.0).collect())
                .collect(),
            labels: p.labels.clone(),
        };
        for n in [1, 3, 5] {
            assert_eq!(top_n_accuracy(&p, n).unwrap(), top_n_accuracy(&q, n).unwrap());
        }
    }

    #[test]
    fn confusion_rows_and_normalization() {
        let m = confusion(&preds());
        assert_eq!(m.row_sums(), vec![0, 1, 1, 1, 0, 0]);
        assert_eq!(m.counts[2][0], 1);
        assert_eq!(m.counts[3][0], 1);
        assert_eq!(m.counts[1][1], 1);
        for (row, sum) in m.normalized().iter().zip(m.row_sums()) {
            let s: f64 = row.iter().sum();
            if sum > 0 {
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(m.false_positives()[0], 2);
    }

    #[test]
    fn perfect_predictor_is_diagonal() {
        let m = ConfusionMatrix::from_pairs(3, [(0, 0), (1, 1), (2, 2), (2, 2)]);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(m.counts[r][c] > 0, r == c);
            }
        }
    }
}
