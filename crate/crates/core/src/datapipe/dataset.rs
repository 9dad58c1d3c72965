use std::path::Path;

use crate::arena::ActionClass;
use crate::datapipe::episode::Episode;
use crate::datapipe::manifest::{DatasetManifest, Role};
use crate::datapipe::mean::MeanImage;
use crate::datapipe::resample::downsample_nn;
use crate::datapipe::stack::{preprocess, StackSpec};
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// One labeled tick: the stack centered on it predicts `label`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub episode: usize,
    pub tick: usize,
    pub label: ActionClass,
}

/// Episode frames held in memory at model resolution.
#[derive(Clone, Debug)]
pub struct StoredEpisode {
    pub frames: Vec<u8>,
    pub labels: Vec<ActionClass>,
}

#[derive(Clone, Debug)]
pub struct FrameStore {
    pub height: usize,
    pub width: usize,
    pub episodes: Vec<StoredEpisode>,
}

impl FrameStore {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            episodes: Vec::new(),
        }
    }

    pub fn push_episode(&mut self, ep: &Episode) {
        let mut frames = Vec::with_capacity(ep.len() * self.height * self.width * 3);
        for i in 0..ep.len() {
            frames.extend(downsample_nn(&ep.frame(i), self.height, self.width).data);
        }
        self.episodes.push(StoredEpisode {
            frames,
            labels: ep.labels.clone(),
        });
    }

    /// Loads every episode of `role`, validating the manifest first.
    pub fn load(manifest: &DatasetManifest, root: &Path, role: Role) -> Result<Self> {
        manifest.validate(root)?;
        let (h, w) = manifest.resolution;
        let mut store = Self::new(h, w);
        for e in manifest.episodes(role) {
            store.push_episode(&Episode::load(&root.join(&e.file.path))?);
        }
        Ok(store)
    }

    pub fn frame(&self, episode: usize, tick: usize) -> &[u8] {
        let n = self.height * self.width * 3;
        &self.episodes[episode].frames[tick * n..(tick + 1) * n]
    }

    /// Every labeled tick, in episode then tick order.
    pub fn samples(&self) -> Vec<Sample> {
        self.episodes
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| {
                ep.labels.iter().enumerate().map(move |(tick, &label)| Sample {
                    episode: e,
                    tick,
                    label,
                })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.labels.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stack(&self, sample: &Sample, spec: &StackSpec, mean: &MeanImage) -> Result<Vec<Tensor>> {
        let ep = self
            .episodes
            .get(sample.episode)
            .ok_or_else(|| arg_err!("episode {} not loaded", sample.episode))?;
        if sample.tick >= ep.labels.len() {
            return Err(arg_err!("tick {} outside episode", sample.tick));
        }
        spec.indices(sample.tick)
            .into_iter()
            .map(|i| preprocess(self.frame(sample.episode, i), mean))
            .collect()
    }
}
