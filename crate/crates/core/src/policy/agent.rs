use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arena::{render, ActionClass, Controller, GameState, NATIVE_HEIGHT, NATIVE_WIDTH};
use crate::datapipe::{downsample_nn, preprocess, MeanImage, StackSpec};
use crate::error::{arg_err, Error, Result};
use crate::evaluator::rank_of;
use crate::models::{forward, ArchitectureSpec, ModelParams};
use crate::ops::{softmax, Mode};
use crate::policy::bias::BiasVector;
use crate::tensor::Tensor;

pub const FRAME_BUFFER_CAPACITY: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub top_k: usize,
    pub bias: BiasVector,
    pub seed: u64,
    pub stack: StackSpec,
}

impl AgentConfig {
    pub fn new(classes: usize, stack: StackSpec) -> Self {
        Self {
            top_k: 3,
            bias: BiasVector::ones(classes),
            seed: 0,
            stack,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        self.bias.validate()?;
        if self.top_k == 0 || self.top_k > self.bias.len() {
            return Err(arg_err!("top_k {} outside 1..={}", self.top_k, self.bias.len()));
        }
        if self.stack.span() + 1 > FRAME_BUFFER_CAPACITY {
            return Err(arg_err!("stack reaches further back than the frame buffer holds"));
        }
        Ok(())
    }
}

/// Samples a class from the renormalized `top_k` highest biased scores.
pub fn select_action<R: Rng + ?Sized>(
    scores: &[f32],
    top_k: usize,
    bias: &BiasVector,
    rng: &mut R,
) -> Result<usize> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(arg_err!("non-finite class score"));
    }
    if scores.len() != bias.len() || top_k == 0 || top_k > scores.len() {
        return Err(arg_err!("scores, bias and top_k disagree"));
    }
    let sum: f64 = scores.iter().map(|&s| s as f64).sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(arg_err!("scores sum to {sum}, expected 1"));
    }
    let biased = bias.apply(scores);
    let as_f32: Vec<f32> = biased.iter().map(|&v| v as f32).collect();
    let mut top: Vec<usize> = (0..scores.len()).collect();
    top.sort_by_key(|&c| rank_of(&as_f32, c));
    top.truncate(top_k);
    let total: f64 = top.iter().map(|&c| biased[c]).sum();
    if total <= 0.0 {
        return Ok(top[0]);
    }
    let mut u = rng.random::<f64>() * total;
    for &c in &top {
        u -= biased[c];
        if u < 0.0 {
            return Ok(c);
        }
    }
    Ok(top[top_k - 1])
}

/// The most recent preprocessed frames with their tick stamps.
#[derive(Clone, Debug, Default)]
pub struct FrameBuffer {
    frames: VecDeque<(u64, Tensor)>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Appends the frame for `stamp`, which must follow the newest one.
    pub fn push(&mut self, stamp: u64, frame: Tensor) -> Result<()> {
        if let Some(&(last, _)) = self.frames.back() {
            if stamp != last + 1 {
                return Err(Error::State(format!("frame {stamp} does not follow {last}")));
            }
        }
        if self.frames.len() == FRAME_BUFFER_CAPACITY {
            self.frames.pop_front();
        }
        self.frames.push_back((stamp, frame));
        Ok(())
    }

    /// Frames for the newest tick per `spec`; look-back past the oldest
    /// buffered frame repeats that frame.
    pub fn stack(&self, spec: &StackSpec) -> Result<Vec<Tensor>> {
        let newest = self.frames.len().checked_sub(1).ok_or_else(|| Error::State("frame buffer is empty".into()))?;
        Ok(spec
            .offsets
            .iter()
            .map(|&o| {
                let i = (newest as i64 + o).max(0) as usize;
                self.frames[i].1.clone()
            })
            .collect())
    }
}

/// One agent decision. Returns the chosen class and the raw softmax scores.
pub fn act<R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    params: &ModelParams,
    buffer: &FrameBuffer,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<(usize, Vec<f32>)> {
    let frames = buffer.stack(&cfg.stack)?;
    let logits = forward(spec, params, &frames, Mode::Infer, rng)?;
    let scores = softmax(logits.data());
    let class = select_action(&scores, cfg.top_k, &cfg.bias, rng)?;
    Ok((class, scores))
}

/// Trained model driving a fighter from rendered frames, exactly as the
/// recorded demonstrations were preprocessed.
pub struct Agent {
    pub spec: ArchitectureSpec,
    pub params: ModelParams,
    pub mean: MeanImage,
    pub config: AgentConfig,
    buffer: FrameBuffer,
    rng: ChaCha8Rng,
    pub last_scores: Vec<f32>,
}

impl Agent {
    pub fn new(spec: ArchitectureSpec, params: ModelParams, mean: MeanImage, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        params.check_against(&spec)?;
        if config.stack.frame_count() != spec.frames_consumed() {
            return Err(arg_err!("stack and model disagree on frame count"));
        }
        if spec.input_resolution != (mean.height, mean.width) {
            return Err(arg_err!("mean image resolution does not match the model"));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            spec,
            params,
            mean,
            config,
            buffer: FrameBuffer::new(),
            rng,
            last_scores: Vec::new(),
        })
    }

    pub fn observe(&mut self, state: &GameState) -> Result<()> {
        let native = render(state, NATIVE_WIDTH, NATIVE_HEIGHT);
        let small = downsample_nn(&native, self.mean.height, self.mean.width);
        let frame = preprocess(&small.data, &self.mean)?;
        if self.buffer.frames.back().is_some_and(|&(t, _)| t + 1 != state.tick) {
            self.buffer.clear();
        }
        self.buffer.push(state.tick, frame)
    }

    pub fn decide(&mut self) -> Result<ActionClass> {
        let (class, scores) = act(&self.spec, &self.params, &self.buffer, &self.config, &mut self.rng)?;
        self.last_scores = scores;
        ActionClass::from_id(class).ok_or_else(|| arg_err!("class {class} has no action"))
    }
}

impl Controller for Agent {
    fn act(&mut self, state: &GameState, _me: usize) -> ActionClass {
        self.observe(state)
            .and_then(|_| self.decide())
            .unwrap_or_else(|e| {
                log::error!("agent failed, pressing nothing: {e}");
                ActionClass::None
            })
    }
}
