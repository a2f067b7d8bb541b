//! Invariant texture learning on synthetic data.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`diffcore`]),
//! a simulator for artifact-bearing and artifact-free fake data
//! ([`genmodel`]), the two-branch auto-encoder detector and its trainer
//! ([`intele`]), an affine-identifiability harness ([`identcheck`]) and
//! ROC/AUC metrics ([`evalkit`]).

pub mod diffcore;
pub mod error;
pub mod evalkit;
pub mod genmodel;
pub mod identcheck;
pub mod intele;
pub mod linalg;
pub mod rng;
pub mod serde_util;

pub use error::{Error, Result};
