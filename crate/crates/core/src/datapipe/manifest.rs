use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arena::{ActionClass, ACTION_COUNT};
use crate::datapipe::episode::Episode;
use crate::datapipe::mean::MeanImage;
use crate::error::{arg_err, fmt_err, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    #[serde(flatten)]
    pub file: FileRef,
    pub role: Role,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub classes: Vec<ClassEntry>,
    /// Model input resolution as (height, width).
    pub resolution: (usize, usize),
    pub stack_offsets: Vec<i64>,
    pub mean_image: FileRef,
    pub episodes: Vec<EpisodeEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn default_classes() -> Vec<ClassEntry> {
    ActionClass::ALL
        .iter()
        .map(|a| ClassEntry {
            id: a.id(),
            name: a.name().to_string(),
        })
        .collect()
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| fmt_err!("manifest: {e}"))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    /// Parses a manifest without touching the files it references.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| fmt_err!("manifest {}: {e}", path.display()))
    }

    pub fn episodes(&self, role: Role) -> impl Iterator<Item = &EpisodeEntry> {
        self.episodes.iter().filter(move |e| e.role == role)
    }

    /// Checks that every referenced file exists with the recorded hash and
    /// that no episode is listed under both roles.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(fmt_err!("unsupported manifest version {}", self.version));
        }
        let mut seen = BTreeSet::new();
        for e in &self.episodes {
            if !seen.insert(e.file.path.as_str()) {
                return Err(fmt_err!("episode {} listed twice", e.file.path));
            }
        }
        for f in std::iter::once(&self.mean_image).chain(self.episodes.iter().map(|e| &e.file)) {
            let bytes = fs::read(root.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(fmt_err!("hash mismatch for {}", f.path));
            }
        }
        Ok(())
    }

    pub fn load_mean(&self, root: &Path) -> Result<MeanImage> {
        let mean = MeanImage::load(&root.join(&self.mean_image.path))?;
        if (mean.height, mean.width) != self.resolution {
            return Err(fmt_err!(
                "mean image is {}x{}, manifest says {:?}",
                mean.height,
                mean.width,
                self.resolution
            ));
        }
        Ok(mean)
    }
}

/// Assigns whole episodes to train or validation. The validation count is
/// `round(n * val_fraction)`, capped so at least one episode trains.
pub fn split_by_episode(n: usize, val_fraction: f64, seed: u64) -> Result<Vec<Role>> {
    if n < 2 {
        return Err(arg_err!("need at least 2 episodes to split, got {n}"));
    }
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(arg_err!("val fraction {val_fraction} outside [0, 1]"));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut roles = vec![Role::Train; n];
    for &i in &order[..n_val] {
        roles[i] = Role::Val;
    }
    Ok(roles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
    pub frequencies: Vec<f64>,
}

impl ClassHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let frequencies = counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        Self {
            counts,
            total,
            frequencies,
        }
    }

    pub fn of_labels<'a>(labels: impl IntoIterator<Item = &'a ActionClass>) -> Self {
        let mut counts = vec![0u64; ACTION_COUNT];
        for l in labels {
            counts[l.id()] += 1;
        }
        Self::from_counts(counts)
    }
}

/// Label counts over every episode of `role`.
pub fn class_histogram(manifest: &DatasetManifest, root: &Path, role: Role) -> Result<ClassHistogram> {
    let mut counts = vec![0u64; manifest.classes.len().max(ACTION_COUNT)];
    for e in manifest.episodes(role) {
        for l in Episode::load_labels(&root.join(&e.file.path))? {
            counts[l.id()] += 1;
        }
    }
    Ok(ClassHistogram::from_counts(counts))
}
