//! Multimodal survival-risk modeling.
//!
//! - [`tensor`]: dense tensors with tape-based reverse-mode differentiation
//! - [`survival`]: weighted Cox partial-likelihood loss and a CoxPH fitter
//! - [`metrics`]: concordance, time-dependent AUC, Kaplan–Meier and log-rank
//! - [`fusion`]: the patch VAE and the attention fusion network
//! - [`data`]: feature files, clinical and gene tables, folds, synthetic cohorts
//! - [`train`]: optimizers and the two training stages, cross-validated evaluation

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod survival;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
