//! Explaining autoencoder reconstruction errors with layer-wise relevance
//! propagation.
//!
//! The crate covers the whole pipeline: a small tensor library, trainable
//! dense and convolutional autoencoders, the relevance propagation engine,
//! corruption-based validation sets, baseline explainers and the metrics used
//! to compare them, plus synthetic data generators.

pub mod autonet;
pub mod baselines;
pub mod corruption;
pub mod datagen;
pub mod error;
pub mod lrp;
pub mod metrics;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
