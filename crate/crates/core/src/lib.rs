//! Behavioral cloning from raw pixels.
//!
//! The crate bundles everything needed to record demonstrations in a small
//! deterministic duel environment, train single-frame, early-integration and
//! late-integration convolutional networks on the rendered frames, and run
//! the result as a live agent with class-rebalanced top-k action sampling.

pub mod arena;
mod binio;
pub mod datapipe;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod models;
pub mod ops;
pub mod optim;
pub mod oracle;
pub mod policy;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
