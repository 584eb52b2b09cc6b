//! CNN environmental feature encoder with explicit per-layer backward passes.
//!
//! Every layer exposes `forward(params, input)` and
//! `backward(params, cached input, upstream, grads) -> d_input`, writing its
//! parameter gradients into a [`Gradients`](crate::numerics::Gradients) buffer.

mod conv;
mod layers;
mod network;
mod residual;

pub use conv::{Conv2d, PaddingMode};
pub use layers::{crop, crop_backward, max_pool2, max_pool2_backward, relu, relu_backward};
pub use network::{Encoder, EncoderConfig, EncoderTape, StageSpec};
pub use residual::{ResidualBlock, ResidualCache};
