//! Dense tensors, reverse-mode differentiation and SGD.
//!
//! Everything is `f64`. A [`Tape`] is confined to one thread; [`Tensor`]s
//! are plain values and can be shared freely.

pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use params::{sgd_step, ParamSet};
pub use tape::{bce_with_logits, sigmoid, Activation, Gradients, Tape, Var};
pub use tensor::Tensor;
