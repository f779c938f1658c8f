//! Core engine: tensors with reverse-mode gradients, the CNN models and
//! optimizers, the toy calorimeter, classical baselines, the training loop
//! and robustness-driven model selection.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(a <= b)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod calo;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod robustness;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use exec::{Executor, Serial};
pub use tensor::Tensor;
