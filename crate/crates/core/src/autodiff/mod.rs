//! Reverse-mode differentiation over dense vectors, small MLPs, and
//! first-order optimizers.
//!
//! Everything is `f64`. A training step records a forward pass on a
//! [`Tape`], calls [`Tape::backward`] on a scalar loss to add gradients into
//! the [`ParamStore`], and lets an [`Optimizer`] consume them.

mod gradcheck;
mod mlp;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, NamedLoss, FD_STEP};
pub use mlp::{HiddenActivation, Mlp, MlpSpec, OutputActivation};
pub use optim::{Optimizer, OptimizerConfig, OptimizerMethod};
pub use params::{ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

pub(crate) use tensor::sigmoid;
