//! Learnable cosine-modulated Gaussian filterbank front-end with relevance
//! weighting, a BiLSTM recording classifier, CPC pretraining of the filters,
//! versioned checkpoints and a k-fold AUC harness.
//!
//! Everything runs in `f64` on the CPU and is deterministic given a seed.

pub mod audio;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod cpc;
pub mod error;
pub mod eval;
pub mod filterbank;
pub mod mel;
pub mod nn;
pub mod relevance;
pub mod rng;

pub use error::{Error, Result};
