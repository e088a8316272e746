//! Dense numeric kernel: tensors, the layer primitives used by the scoring
//! heads, a gradient tape, SGD with momentum, and a finite-difference
//! gradient checker.
//!
//! Everything here runs in `f64`; feature files stay `f32` on disk.

mod checkpoint;
mod gradcheck;
pub mod kernels;
mod optim;
mod tape;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, restore_into, write_checkpoint, NamedTensor,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use optim::{sgd_step, Parameter, SgdConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("numeric fault: {0}")]
    NumericFault(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Weights drawn from `U(-1/√fan_in, 1/√fan_in)`.
pub fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
