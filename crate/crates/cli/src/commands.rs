//! Batch subcommands. Each one is a thin wiring of a core module and
//! returns the paths or results it produced.

use std::fs;
use std::path::{Path, PathBuf};

use pixmimic_core::arena::{ActionClass, CpuLevel, ACTION_COUNT};
use pixmimic_core::datapipe::{
    build_dataset, derive_seed, DatasetManifest, FrameStore, MeanImage, Role, Sample, MANIFEST_FILE,
};
use pixmimic_core::evaluator::{
    confusion, export_report, predict, run_series, saliency as saliency_map, top_n_summary,
    ConfusionReport, MatchSeries, MetricValue, Report,
};
use pixmimic_core::models::{load_checkpoint, save_checkpoint, ArchitectureSpec, Checkpoint, ModelParams};
use pixmimic_core::policy::{biased_confusion, compute_bias, fpr_ratio, Agent, AgentConfig, BiasVector, DEFAULT_ROUNDS};
use pixmimic_core::trainer::{train as run_training, TrainData};

use crate::config::{EvalSplit, RunConfig};
use crate::CliError;

pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

pub(crate) fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let path = cfg.dataset.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CliError::Missing(format!("no dataset manifest at {}", path.display())));
    }
    Ok(DatasetManifest::load(&path)?)
}

pub(crate) fn load_model(path: Option<&Path>) -> Result<Checkpoint, CliError> {
    let path = path.ok_or_else(|| CliError::Missing("--checkpoint is required".into()))?;
    if !path.is_file() {
        return Err(CliError::Missing(format!("no checkpoint at {}", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

/// Mean image of the dataset, which must be the one the model trained on.
pub(crate) fn matching_mean(cfg: &RunConfig, manifest: &DatasetManifest, ckpt: &Checkpoint) -> Result<MeanImage, CliError> {
    let mean = manifest.load_mean(&cfg.dataset)?;
    if !ckpt.mean_hash.is_empty() && mean.hash() != ckpt.mean_hash {
        return Err(CliError::Config(format!(
            "checkpoint was trained with mean image {}, dataset has {}",
            ckpt.mean_hash,
            mean.hash()
        )));
    }
    Ok(mean)
}

pub fn record(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let manifest = build_dataset(&cfg.dataset, &cfg.record_config())?;
    log::info!(
        "dataset at {}: {} episodes",
        cfg.dataset.display(),
        manifest.episodes.len()
    );
    Ok(manifest)
}

pub fn model_spec(cfg: &RunConfig) -> Result<ArchitectureSpec, CliError> {
    let spec = ArchitectureSpec::with_frames(cfg.preset, cfg.variant, ACTION_COUNT, cfg.stack_offsets.len())?;
    if spec.input_resolution != cfg.resolution {
        return Err(CliError::Config(format!(
            "{} expects {:?} inputs, configured resolution is {:?}",
            cfg.preset, spec.input_resolution, cfg.resolution
        )));
    }
    Ok(spec)
}

/// Trains from scratch and writes the best-validation checkpoint (the last
/// one when there is no validation split) plus the JSONL training log.
pub fn train(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<PathBuf, CliError> {
    let manifest = load_manifest(cfg)?;
    let spec = model_spec(cfg)?;
    if manifest.resolution != cfg.resolution {
        return Err(CliError::Config(format!(
            "dataset resolution {:?} differs from configured {:?}",
            manifest.resolution, cfg.resolution
        )));
    }
    let train_store = FrameStore::load(&manifest, &cfg.dataset, Role::Train)?;
    let val_store = FrameStore::load(&manifest, &cfg.dataset, Role::Val)?;
    let mean = manifest.load_mean(&cfg.dataset)?;
    let stack = cfg.stack();
    let data = TrainData {
        train: &train_store,
        val: Some(&val_store),
        stack: &stack,
        mean: &mean,
    };
    let params = ModelParams::he_uniform(&spec, derive_seed(cfg.seed, 6, 0))?;
    let outcome = run_training(&spec, params, &data, &cfg.train_config())?;
    fs::create_dir_all(&cfg.output)?;
    let path = checkpoint.map_or_else(|| cfg.output.join(MODEL_FILE), Path::to_path_buf);
    let chosen = outcome.best.map_or(outcome.last, |(c, _)| c);
    save_checkpoint(&path, &chosen)?;
    outcome.log.save(&cfg.output.join(TRAIN_LOG_FILE))?;
    log::info!("checkpoint (iteration {}) written to {}", chosen.iteration, path.display());
    Ok(path)
}

fn split_role(split: EvalSplit) -> Role {
    match split {
        EvalSplit::Train => Role::Train,
        EvalSplit::Val => Role::Val,
    }
}

fn bias_report(bias: &BiasVector) -> serde_json::Value {
    serde_json::json!({
        "provenance": bias.provenance,
        "degenerate": bias.degenerate,
        "values": bias.to_named(&ActionClass::names()),
    })
}

/// Bias fitted on validation predictions when `compute_bias` is set,
/// otherwise the configured one.
fn agent_bias(cfg: &RunConfig, ckpt: &Checkpoint, mean: &MeanImage) -> Result<BiasVector, CliError> {
    if !cfg.compute_bias {
        return cfg.bias_vector();
    }
    let manifest = load_manifest(cfg)?;
    let val = FrameStore::load(&manifest, &cfg.dataset, Role::Val)?;
    let preds = predict(&ckpt.spec, &ckpt.params, &val, &val.samples(), &cfg.stack(), mean)?;
    Ok(compute_bias(&preds.scores(), &preds.labels, DEFAULT_ROUNDS)?)
}

pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Report, CliError> {
    let ckpt = load_model(checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let mean = matching_mean(cfg, &manifest, &ckpt)?;
    let store = FrameStore::load(&manifest, &cfg.dataset, split_role(cfg.eval_split))?;
    let preds = predict(&ckpt.spec, &ckpt.params, &store, &store.samples(), &cfg.stack(), &mean)?;
    let acc = top_n_summary(&preds)?;
    let mut report = Report::default();
    report.metrics.insert("top1".into(), MetricValue::exact(acc.top1));
    report.metrics.insert("top3".into(), MetricValue::exact(acc.top3));
    report.metrics.insert("top5".into(), MetricValue::exact(acc.top5));
    report.metrics.insert("samples".into(), MetricValue::exact(preds.len() as f64));
    let names: Vec<String> = ActionClass::names().iter().map(|s| s.to_string()).collect();
    report.confusion = Some(ConfusionReport::new(names, &confusion(&preds)));
    if cfg.compute_bias {
        let scores = preds.scores();
        let bias = compute_bias(&scores, &preds.labels, DEFAULT_ROUNDS)?;
        let before = fpr_ratio(&biased_confusion(&scores, &preds.labels, &BiasVector::ones(ACTION_COUNT)));
        let after = fpr_ratio(&biased_confusion(&scores, &preds.labels, &bias));
        report.metrics.insert("fpr_ratio_unbiased".into(), MetricValue::exact(before));
        report.metrics.insert("fpr_ratio_biased".into(), MetricValue::exact(after));
        report.sections.insert("bias".into(), bias_report(&bias));
    }
    let dir = cfg.output.join("eval");
    export_report(&report, &[], &dir)?;
    log::info!(
        "top-1 {:.3} top-3 {:.3} top-5 {:.3} over {} samples; report in {}",
        acc.top1,
        acc.top3,
        acc.top5,
        preds.len(),
        dir.display()
    );
    Ok(report)
}

pub fn play(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<MatchSeries, CliError> {
    let ckpt = load_model(checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let mean = matching_mean(cfg, &manifest, &ckpt)?;
    let level = CpuLevel::new(cfg.cpu_level)?;
    let bias = agent_bias(cfg, &ckpt, &mean)?;
    let series = run_series(
        |g| {
            let agent_cfg = AgentConfig {
                top_k: cfg.top_k,
                bias: bias.clone(),
                seed: derive_seed(cfg.seed, 9, g as u64),
                stack: cfg.stack(),
            };
            let agent = Agent::new(ckpt.spec.clone(), ckpt.params.clone(), mean.clone(), agent_cfg)?;
            Ok(Box::new(agent) as Box<_>)
        },
        level,
        cfg.games,
        cfg.seed,
        cfg.match_tick_limit,
        &cfg.arena,
    )?;
    let mut report = Report::default();
    report.metrics.insert(
        "damage_dealt".into(),
        MetricValue::with_ci(series.dealt_ci.mean, series.dealt_ci.half_width),
    );
    report.metrics.insert(
        "damage_received".into(),
        MetricValue::with_ci(series.received_ci.mean, series.received_ci.half_width),
    );
    report.sections.insert("bias".into(), bias_report(&bias));
    report.sections.insert(
        "series".into(),
        serde_json::to_value(&series).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let dir = cfg.output.join("play");
    export_report(&report, &[], &dir)?;
    log::info!(
        "vs level {}: dealt {:.1} ± {:.1}, received {:.1} ± {:.1} over {} games",
        cfg.cpu_level,
        series.dealt_ci.mean,
        series.dealt_ci.half_width,
        series.received_ci.mean,
        series.received_ci.half_width,
        series.n
    );
    Ok(series)
}

/// Saliency maps for ticks `saliency_start..saliency_start + saliency_length`
/// of one validation episode: one PPM per tick and frame.
pub fn saliency(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let ckpt = load_model(checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let mean = matching_mean(cfg, &manifest, &ckpt)?;
    let val = FrameStore::load(&manifest, &cfg.dataset, Role::Val)?;
    let Some(episode) = val.episodes.get(cfg.saliency_episode) else {
        return Err(CliError::Config(format!(
            "saliency_episode {} but only {} validation episodes",
            cfg.saliency_episode,
            val.episodes.len()
        )));
    };
    let end = cfg.saliency_start + cfg.saliency_length;
    if cfg.saliency_length == 0 || end > episode.labels.len() {
        return Err(CliError::Config(format!(
            "segment {}..{end} outside the episode's {} frames",
            cfg.saliency_start,
            episode.labels.len()
        )));
    }
    let stack = cfg.stack();
    let mut maps = Vec::new();
    let mut report = Report::default();
    let mut classes = Vec::new();
    for tick in cfg.saliency_start..end {
        let sample = Sample {
            episode: cfg.saliency_episode,
            tick,
            label: episode.labels[tick],
        };
        let frames = val.stack(&sample, &stack, &mean)?;
        let s = saliency_map(&ckpt.spec, &ckpt.params, &frames, None)?;
        classes.push(serde_json::json!({ "tick": tick, "class": ActionClass::ALL[s.class].name() }));
        for (k, m) in s.maps.into_iter().enumerate() {
            maps.push((format!("saliency_t{tick:05}_f{k}"), m));
        }
    }
    report.metrics.insert("maps".into(), MetricValue::exact(maps.len() as f64));
    report.sections.insert("predicted".into(), serde_json::Value::Array(classes));
    let dir = cfg.output.join("saliency");
    let written = export_report(&report, &maps, &dir)?;
    log::info!("{} saliency maps written to {}", maps.len(), dir.display());
    Ok(written.into_iter().filter(|p| p.extension().is_some_and(|e| e == "ppm")).collect())
}
