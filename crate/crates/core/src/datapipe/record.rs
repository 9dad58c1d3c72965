use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arena::{ArenaConstants, CpuLevel, CpuPlayer, Expert};
use crate::datapipe::episode::{record_episode, Episode};
use crate::datapipe::manifest::*;
use crate::datapipe::mean::MeanAccumulator;
use crate::datapipe::resample::downsample_nn;
use crate::datapipe::stack::StackSpec;
use crate::error::{arg_err, fmt_err, Result};

/// Independent seed for stream `stream` of item `index` (splitmix64 mix).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xA076_1D64_78BD_642F))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordConfig {
    pub episodes: usize,
    pub tick_limit: u64,
    pub seed: u64,
    pub val_fraction: f64,
    pub resolution: (usize, usize),
    pub stack: StackSpec,
    /// Opponent level per episode, cycled.
    pub cpu_levels: Vec<u8>,
    pub constants: ArenaConstants,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            episodes: 40,
            tick_limit: 1800,
            seed: 0,
            val_fraction: 0.2,
            resolution: (64, 64),
            stack: StackSpec::default(),
            cpu_levels: vec![3, 6, 9],
            constants: ArenaConstants::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub classes: Vec<String>,
    pub train: ClassHistogram,
    pub val: ClassHistogram,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MEAN_FILE: &str = "mean.bin";
pub const HISTOGRAM_FILE: &str = "histogram.json";

/// Records expert-versus-CPU episodes into `dir` and writes the manifest,
/// the training mean image and a class histogram report.
pub fn build_dataset(dir: &Path, cfg: &RecordConfig) -> Result<DatasetManifest> {
    if cfg.cpu_levels.is_empty() {
        return Err(arg_err!("at least one cpu level is required"));
    }
    let levels = cfg
        .cpu_levels
        .iter()
        .map(|&l| CpuLevel::new(l))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(dir, cfg, |i| {
        let i = i as u64;
        let mut expert = Expert::new(derive_seed(cfg.seed, 1, i));
        let mut cpu = CpuPlayer::new(levels[i as usize % levels.len()], derive_seed(cfg.seed, 2, i));
        record_episode(
            &cfg.constants,
            derive_seed(cfg.seed, 0, i),
            &mut expert,
            &mut cpu,
            cfg.tick_limit,
            None,
        )
    })
}

/// Writes `cfg.episodes` episodes produced by `episode(index)` into `dir`,
/// split by episode, together with the manifest, mean image and histogram.
pub fn write_dataset<F>(dir: &Path, cfg: &RecordConfig, mut episode: F) -> Result<DatasetManifest>
where
    F: FnMut(usize) -> Result<Episode>,
{
    cfg.stack.validate()?;
    let roles = split_by_episode(cfg.episodes, cfg.val_fraction, derive_seed(cfg.seed, 3, 0))?;
    fs::create_dir_all(dir)?;
    let (h, w) = cfg.resolution;
    let mut mean = MeanAccumulator::new(h, w);
    let mut train_counts = vec![0u64; crate::arena::ACTION_COUNT];
    let mut val_counts = train_counts.clone();
    let mut entries = Vec::with_capacity(cfg.episodes);
    for (i, &role) in roles.iter().enumerate() {
        let ep = episode(i)?;
        let mut bytes = Vec::new();
        ep.write_to(&mut bytes)?;
        let name = format!("episode_{i:04}.pxep");
        fs::write(dir.join(&name), &bytes)?;
        let counts = match role {
            Role::Train => {
                for t in 0..ep.len() {
                    mean.add(&downsample_nn(&ep.frame(t), h, w).data)?;
                }
                &mut train_counts
            }
            Role::Val => &mut val_counts,
        };
        for l in &ep.labels {
            counts[l.id()] += 1;
        }
        log::info!("recorded {name} ({:?}, {} frames)", role, ep.len());
        entries.push(EpisodeEntry {
            file: FileRef {
                path: name,
                sha256: sha256_hex(&bytes),
            },
            role,
            frames: ep.len(),
        });
    }
    let mean = mean.finish()?;
    let mean_bytes = mean.to_bytes();
    fs::write(dir.join(MEAN_FILE), &mean_bytes)?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        classes: default_classes(),
        resolution: cfg.resolution,
        stack_offsets: cfg.stack.offsets.clone(),
        mean_image: FileRef {
            path: MEAN_FILE.into(),
            sha256: sha256_hex(&mean_bytes),
        },
        episodes: entries,
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    let report = HistogramReport {
        classes: manifest.classes.iter().map(|c| c.name.clone()).collect(),
        train: ClassHistogram::from_counts(train_counts),
        val: ClassHistogram::from_counts(val_counts),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| fmt_err!("histogram: {e}"))?;
    fs::write(dir.join(HISTOGRAM_FILE), json + "\n")?;
    Ok(manifest)
}
