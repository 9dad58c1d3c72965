//! Architecture presets, parameter storage, forward/backward evaluation and
//! checkpoint persistence.

pub mod checkpoint;
pub mod network;
pub mod params;
pub mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use network::{
    backward, forward, forward_traced, tower_features, ActivationPattern, Trace,
};
pub use params::ModelParams;
pub use spec::{param_count, ArchitectureSpec, LayerSpec, Preset, ShapeTrace, Variant};

use crate::error::Result;

/// Builds a preset architecture with freshly initialized parameters.
pub fn build(
    preset: Preset,
    variant: Variant,
    class_count: usize,
    seed: u64,
) -> Result<(ArchitectureSpec, ModelParams)> {
    let spec = ArchitectureSpec::preset(preset, variant, class_count)?;
    let params = ModelParams::he_uniform(&spec, seed)?;
    Ok((spec, params))
}
