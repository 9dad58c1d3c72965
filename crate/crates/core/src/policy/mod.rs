//! Inference-time action selection: class-score bias multipliers, top-k
//! sampling and the live frame-buffer agent.

pub mod agent;
pub mod bias;

pub use agent::{act, select_action, Agent, AgentConfig, FrameBuffer, FRAME_BUFFER_CAPACITY};
pub use bias::{biased_confusion, compute_bias, fpr_ratio, BiasVector, Provenance, B_MIN, DEFAULT_ROUNDS};
