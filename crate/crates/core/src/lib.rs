//! Regression head for no-reference image quality assessment on frozen
//! backbone embeddings.
//!
//! The head is a three-layer MLP (`d -> 512 -> 512 -> 1`) whose two hidden
//! activation sites can be plain nonlinearities or a per-channel gated blend
//! of a scaled sigmoid and a LeakyReLU. Training uses MSE plus a pairwise
//! hinge ranking term with a batch-adaptive margin, Adam, and an optional
//! multi-step learning-rate decay. Gradients are written by hand per layer.

// `Real` is f64 or f32 by feature; casts that are no-ops in one build are
// required in the other.
#![allow(clippy::unnecessary_cast)]

pub mod activations;
pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod head;
pub mod kernel;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod trainer;

pub use error::{IqaError, Result};
pub use kernel::{Matrix, Real};
