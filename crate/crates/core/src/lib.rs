//! Modular decision-support networks.
//!
//! A consultation is a sequence of answered questions. Each question has its
//! own small encoder that updates a shared state vector, and each diagnosis
//! has its own decoder reading probabilities off that state. Any subset of
//! questions, in any order, yields a valid prediction without imputation.
//!
//! * [`autodiff`]: tensors, a reverse-mode tape, MLPs, and optimizers.
//! * [`data`]: feature schemas, CSV ingestion, synthetic data, splits.
//! * [`model`]: the modular network, consultation trajectories, model files.
//! * [`training`]: stepwise loss, training, fine-tuning, modular updates.
//! * [`experiments`]: metrics, statistics, baselines, cross-validation, and
//!   the interoperability experiment runner.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod model;
pub mod training;
pub mod experiments;
mod error;

pub use error::{Error, Result};
