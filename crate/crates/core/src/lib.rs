//! Pairwise relation regression for scalar age estimation.
//!
//! A pair network predicts four relations between two subjects' targets
//! (sum, signed difference, max, min); closed-form recovery strategies turn
//! predicted relations back into per-subject estimates, with ensembles,
//! uncertainty, and a cross-validation harness around the whole thing.
//!
//! The crate is organised as:
//! - [`numerics`]: a small tensor library with reverse-mode autodiff, the
//!   layer kinds the models need, and Adam with a halving schedule.
//! - [`model`]: the pair architecture — SFCN/mSFCN backbones, token fusion
//!   through a transformer encoder (or an FC baseline), relation heads.
//! - [`relations`]: the relation algebra, recovery strategies S1–S16 and the
//!   maximum-consistency rule.
//! - [`data`]: synthetic dataset generation, manifests, folds, the
//!   age-group-balanced pair sampler.
//! - [`experiments`]: losses, metrics, paired t-tests, uncertainty, model
//!   ranking, the training loop and the cross-validation driver.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numerics;
pub mod relations;

pub use error::{Error, Result};
