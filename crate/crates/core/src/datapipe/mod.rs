//! Demonstration recording, preprocessing and dataset files.

pub mod dataset;
pub mod episode;
pub mod manifest;
pub mod mean;
pub mod probe;
pub mod record;
pub mod resample;
pub mod stack;

pub use dataset::{FrameStore, Sample, StoredEpisode};
pub use episode::{record_episode, Episode, EPISODE_MAGIC, EPISODE_VERSION};
pub use manifest::{
    class_histogram, split_by_episode, ClassHistogram, DatasetManifest, EpisodeEntry, FileRef,
    Role,
};
pub use mean::{compute_mean_image, MeanAccumulator, MeanImage};
pub use probe::{build_probe_dataset, probe_label, record_probe_episode, Hopper};
pub use record::{build_dataset, derive_seed, write_dataset, HistogramReport, RecordConfig, MANIFEST_FILE};
pub use resample::{downsample_nn, nn_index};
pub use stack::{make_stack, preprocess, StackSpec, INPUT_SCALE};
