//! Minimal dense-network engine: layers, activations, softmax,
//! cross-entropy, exact analytic gradients, and Adam.
//!
//! Everything is generic over [`Scalar`]: training runs at `f32`, gradient
//! checks and bound-adjacent math at `f64`. There is no autodiff graph; the
//! forward pass records a [`BatchTape`] and the backward pass consumes it.

mod adam;
mod loss;
mod mlp;
mod scalar;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    cross_entropy, cross_entropy_from_logits, cross_entropy_from_logits_onehot, log_sum_exp_rows,
    softmax, softmax_ce_logit_grad, softmax_ce_logit_grad_multi, softmax_vjp,
};
pub use mlp::{Activation, BatchTape, DenseLayer, Gradients, Mlp, TapeInput};
pub use scalar::Scalar;
