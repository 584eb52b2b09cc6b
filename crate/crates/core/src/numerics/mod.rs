//! Dense tensors, parameter storage with Adam, finite-difference gradient
//! checking and the named-tensor checkpoint format.
//!
//! Layers follow one contract: `forward(params, input)` returns the output plus
//! whatever it needs to differentiate later, and `backward` consumes the
//! upstream gradient, accumulates parameter gradients into a [`Gradients`]
//! buffer and returns the gradient with respect to its input.

mod checkpoint;
mod gemm;
mod gradcheck;
mod params;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gemm::{gemm, Transpose};
pub use gradcheck::grad_check;
pub use params::{AdamConfig, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
