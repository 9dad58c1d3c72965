//! Mini-batch Adam training with annealed learning rate, periodic
//! validation and best-checkpoint tracking.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{derive_seed, FrameStore, MeanImage, Sample, StackSpec};
use crate::error::{arg_err, Error, Result};
use crate::evaluator::{predict, top_n_summary, TopN};
use crate::models::{backward, forward_traced, ArchitectureSpec, Checkpoint, ModelParams};
use crate::ops::{softmax_cross_entropy, Mode};
use crate::optim::{adam_step, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub anneal_factor: f64,
    pub anneal_every: u64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: f64,
    /// Stops early once this many updates have run.
    pub max_iterations: Option<u64>,
    pub eval_every: u64,
    pub seed: u64,
    /// Drops wall-clock fields from the log so reruns are byte-identical.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            anneal_factor: 0.95,
            anneal_every: 5000,
            l2: 1e-7,
            batch_size: 25,
            epochs: 2.0,
            max_iterations: None,
            eval_every: 500,
            seed: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.base_lr > 0.0
            && self.anneal_every > 0
            && self.l2 >= 0.0
            && self.batch_size > 0
            && self.epochs > 0.0
            && self.eval_every > 0;
        if !positive {
            return Err(arg_err!("training hyperparameters must be positive"));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(arg_err!("anneal factor {} outside (0, 1]", self.anneal_factor));
        }
        Ok(())
    }
}

/// `base_lr * anneal_factor^floor(iteration / anneal_every)`.
pub fn lr_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    cfg.base_lr * cfg.anneal_factor.powi((iteration / cfg.anneal_every) as i32)
}

/// Endless stream of sample indices, one fresh permutation per epoch.
pub struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    pub fn new(len: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(arg_err!("cannot batch an empty dataset"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Ok(Self { order, pos: 0, rng })
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (size - batch.len()).min(self.order.len() - self.pos);
            batch.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        batch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration {
        iteration: u64,
        loss: f64,
        lr: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        elapsed_s: Option<f64>,
    },
    Eval {
        iteration: u64,
        #[serde(flatten)]
        accuracy: TopN,
        #[serde(skip_serializing_if = "Option::is_none")]
        elapsed_s: Option<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Iteration { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn evals(&self) -> Vec<(u64, TopN)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Eval { iteration, accuracy, .. } => Some((*iteration, *accuracy)),
                _ => None,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Data a training run reads.
pub struct TrainData<'a> {
    pub train: &'a FrameStore,
    pub val: Option<&'a FrameStore>,
    pub stack: &'a StackSpec,
    pub mean: &'a MeanImage,
}

pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Checkpoint with the best validation top-1 seen at an evaluation.
    pub best: Option<(Checkpoint, TopN)>,
    pub log: TrainLog,
}

fn fresh_optimizer(params: &ModelParams) -> BTreeMap<String, AdamState> {
    params
        .iter()
        .map(|(n, t)| (n.clone(), AdamState::new(t.shape())))
        .collect()
}

/// Mean cross-entropy and its parameter gradient over one batch.
pub fn batch_gradient<R: rand::Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    data: &TrainData<'_>,
    batch: &[Sample],
    mode: Mode,
    rng: &mut R,
    grads: &mut ModelParams,
) -> Result<f64> {
    grads.fill(0.0);
    let scale = 1.0 / batch.len() as f32;
    let mut total = 0.0;
    for s in batch {
        let frames = data.train.stack(s, data.stack, data.mean)?;
        let (logits, trace) = forward_traced(spec, params, &frames, mode, rng)?;
        let mut out = softmax_cross_entropy(&logits, s.label.id())?;
        total += out.loss;
        out.logit_grad.scale(scale);
        backward(spec, params, &trace, &out.logit_grad, grads, false)?;
    }
    Ok(total / batch.len() as f64)
}

fn evaluate(spec: &ArchitectureSpec, params: &ModelParams, data: &TrainData<'_>) -> Result<Option<TopN>> {
    let Some(val) = data.val.filter(|v| !v.is_empty()) else {
        return Ok(None);
    };
    let preds = predict(spec, params, val, &val.samples(), data.stack, data.mean)?;
    Ok(Some(top_n_summary(&preds)?))
}

/// Trains `params` from a fresh optimizer state.
pub fn train(
    spec: &ArchitectureSpec,
    params: ModelParams,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.check_against(spec)?;
    if data.stack.frame_count() != spec.frames_consumed() {
        return Err(arg_err!(
            "stack has {} frames, model consumes {}",
            data.stack.frame_count(),
            spec.frames_consumed()
        ));
    }
    let samples = data.train.samples();
    let per_epoch = samples.len().div_ceil(cfg.batch_size) as f64;
    let mut iterations = (cfg.epochs * per_epoch).ceil() as u64;
    if let Some(max) = cfg.max_iterations {
        iterations = iterations.min(max);
    }
    let mut batcher = Batcher::new(samples.len(), derive_seed(cfg.seed, 4, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 5, 0));
    let mut ckpt = Checkpoint::new(spec.clone(), params);
    ckpt.optimizer = fresh_optimizer(&ckpt.params);
    ckpt.mean_hash = data.mean.hash();
    let mut grads = ckpt.params.zeros_like();
    let mut log = TrainLog::default();
    let mut best: Option<(Checkpoint, TopN)> = None;
    let clock = Instant::now();
    let elapsed = |cfg: &TrainConfig| (!cfg.deterministic).then(|| clock.elapsed().as_secs_f64());

    for it in 0..iterations {
        let batch: Vec<Sample> = batcher
            .next_batch(cfg.batch_size)
            .into_iter()
            .map(|i| samples[i])
            .collect();
        let loss = batch_gradient(spec, &ckpt.params, data, &batch, Mode::Train, &mut rng, &mut grads)?;
        if !loss.is_finite() {
            let ids: Vec<String> = batch.iter().map(|s| format!("{}:{}", s.episode, s.tick)).collect();
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {it}, batch [{}]",
                ids.join(", ")
            )));
        }
        let lr = lr_at(it, cfg);
        for (name, p) in ckpt.params.iter_mut() {
            let state = ckpt.optimizer.get_mut(name).expect("optimizer block");
            adam_step(p, grads.get(name)?, state, lr, cfg.l2)?;
        }
        ckpt.iteration = it + 1;
        log.records.push(LogRecord::Iteration {
            iteration: it,
            loss,
            lr,
            elapsed_s: elapsed(cfg),
        });
        let done = it + 1 == iterations;
        if (it + 1) % cfg.eval_every == 0 || done {
            if let Some(acc) = evaluate(spec, &ckpt.params, data)? {
                log::info!(
                    "iteration {}: loss {loss:.4}, val top-1 {:.3} top-3 {:.3}",
                    it + 1,
                    acc.top1,
                    acc.top3
                );
                if best.as_ref().is_none_or(|(_, b)| acc.top1 > b.top1) {
                    best = Some((ckpt.clone(), acc));
                }
                log.records.push(LogRecord::Eval {
                    iteration: it + 1,
                    accuracy: acc,
                    elapsed_s: elapsed(cfg),
                });
            }
        }
    }
    Ok(TrainOutcome {
        last: ckpt,
        best,
        log,
    })
}
