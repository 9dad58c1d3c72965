//! Run configuration: one flat JSON object, every key optional, unknown keys
//! rejected. Command-line `--key=value` overrides are applied to the JSON
//! before it is parsed, so they go through the same validation. Arena
//! constants live under `arena` and are overridden as `--arena.gravity=0.5`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use pixmimic_core::arena::{ArenaConstants, ACTION_COUNT};
use pixmimic_core::datapipe::{RecordConfig, StackSpec};
use pixmimic_core::models::{Preset, Variant};
use pixmimic_core::policy::BiasVector;
use pixmimic_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Val,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Human,
    Agent,
    Takeover,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset directory written by `record` and read by the other commands.
    pub dataset: PathBuf,
    /// Directory for checkpoints, logs and reports.
    pub output: PathBuf,

    pub arena: ArenaConstants,
    pub episodes: usize,
    pub tick_limit: u64,
    pub val_fraction: f64,
    pub cpu_levels: Vec<u8>,
    /// Network input size as (height, width).
    pub resolution: (usize, usize),
    pub stack_offsets: Vec<i64>,

    pub preset: Preset,
    pub variant: Variant,
    pub base_lr: f64,
    pub anneal_factor: f64,
    pub anneal_every: u64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: f64,
    pub max_iterations: Option<u64>,
    pub eval_every: u64,
    pub deterministic: bool,

    pub eval_split: EvalSplit,
    pub top_k: usize,
    /// Per-class bias by class name; classes left out keep 1.
    pub bias: Option<BTreeMap<String, f64>>,
    /// Fits the bias on the validation split instead of using `bias`.
    pub compute_bias: bool,
    pub games: usize,
    pub cpu_level: u8,
    pub match_tick_limit: u64,

    /// Validation episode (index among val episodes) replayed by `saliency`.
    pub saliency_episode: usize,
    pub saliency_start: usize,
    pub saliency_length: usize,

    pub port: u16,
    pub static_dir: PathBuf,
    pub serve_mode: ControlMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rec = RecordConfig::default();
        let tr = TrainConfig::default();
        Self {
            seed: 0,
            dataset: "data".into(),
            output: "out".into(),
            arena: ArenaConstants::default(),
            episodes: rec.episodes,
            tick_limit: rec.tick_limit,
            val_fraction: rec.val_fraction,
            cpu_levels: rec.cpu_levels,
            resolution: rec.resolution,
            stack_offsets: StackSpec::default().offsets,
            preset: Preset::Compact,
            variant: Variant::LateIntegration,
            base_lr: tr.base_lr,
            anneal_factor: tr.anneal_factor,
            anneal_every: tr.anneal_every,
            l2: tr.l2,
            batch_size: tr.batch_size,
            epochs: tr.epochs,
            max_iterations: tr.max_iterations,
            eval_every: tr.eval_every,
            deterministic: false,
            eval_split: EvalSplit::Val,
            top_k: 3,
            bias: None,
            compute_bias: false,
            games: 10,
            cpu_level: 3,
            match_tick_limit: 3600,
            saliency_episode: 0,
            saliency_start: 15,
            saliency_length: 30,
            port: 8080,
            static_dir: "webui/dist".into(),
            serve_mode: ControlMode::Agent,
        }
    }
}

/// Parses `value` as JSON when possible, otherwise as a bare string, so
/// `--variant=single_frame` and `--epochs=0.5` both work.
fn override_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

fn set_path(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts = key.split('.').peekable();
    let mut obj = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(CliError::Config(format!("malformed override key {key:?}")));
        }
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        let child = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        obj = child
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part} is not an object")))?;
    }
    Ok(())
}

impl RunConfig {
    /// Loads `path` (or the defaults) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Config(format!("{}: expected a JSON object", p.display()))),
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        for (k, v) in overrides {
            set_path(&mut root, k, override_value(v))?;
        }
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(root)).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.stack().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.variant == Variant::SingleFrame && self.stack_offsets.len() != 1 {
            return bad("single_frame takes exactly one stack offset".into());
        }
        if self.variant != Variant::SingleFrame && self.stack_offsets.len() < 2 {
            return bad(format!("{} needs at least two stack offsets", self.variant));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        if self.top_k == 0 || self.top_k > ACTION_COUNT {
            return bad(format!("top_k {} outside 1..={ACTION_COUNT}", self.top_k));
        }
        if self.games == 0 || self.episodes == 0 || self.tick_limit == 0 || self.match_tick_limit == 0 {
            return bad("episodes, games and tick limits must be positive".into());
        }
        if self.arena.tick_rate == 0 {
            return bad("arena.tick_rate must be positive".into());
        }
        self.bias_vector()?;
        Ok(())
    }

    pub fn stack(&self) -> StackSpec {
        StackSpec {
            offsets: self.stack_offsets.clone(),
        }
    }

    pub fn record_config(&self) -> RecordConfig {
        RecordConfig {
            episodes: self.episodes,
            tick_limit: self.tick_limit,
            seed: self.seed,
            val_fraction: self.val_fraction,
            resolution: self.resolution,
            stack: self.stack(),
            cpu_levels: self.cpu_levels.clone(),
            constants: self.arena.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.base_lr,
            anneal_factor: self.anneal_factor,
            anneal_every: self.anneal_every,
            l2: self.l2,
            batch_size: self.batch_size,
            epochs: self.epochs,
            max_iterations: self.max_iterations,
            eval_every: self.eval_every,
            seed: self.seed,
            deterministic: self.deterministic,
        }
    }

    /// The configured manual bias, or all ones.
    pub fn bias_vector(&self) -> Result<BiasVector, CliError> {
        let names = pixmimic_core::arena::ActionClass::names();
        match &self.bias {
            None => Ok(BiasVector::ones(ACTION_COUNT)),
            Some(map) => {
                let mut full: BTreeMap<String, f64> = names.iter().map(|n| (n.to_string(), 1.0)).collect();
                for (k, v) in map {
                    if !full.contains_key(k) {
                        return Err(CliError::Config(format!("bias names unknown class {k:?}")));
                    }
                    full.insert(k.clone(), *v);
                }
                BiasVector::from_named(&full, &names).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}
