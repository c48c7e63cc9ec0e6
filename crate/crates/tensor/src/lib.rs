//! Dense row-major tensors and a reverse-mode autodiff tape.
//!
//! The engine covers exactly what a small encoder-decoder transformer needs:
//! matrix products, row-broadcast bias, ReLU, softmax, layer norm, batched
//! multi-head scaled dot-product attention, embedding gathers, dropout and a
//! masked sparse cross-entropy. All reductions run sequentially left to right
//! so a fixed input always produces bit-identical output.
//!
//! Values are `f32` by default. Every kernel is generic over [`Scalar`] so the
//! same graph can be replayed in `f64` when checking gradients numerically.

mod error;
pub mod kernels;
pub mod optim;
mod scalar;
mod tape;
mod tensor;

pub use error::{TensorError, TensorResult};
pub use kernels::{layer_norm, matmul, scaled_dot_attention, softmax, AttentionLayout};
pub use optim::{adam_step, clip_global_norm, Adam, AdamConfig, AdamState, Gradients, Parameters};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Epsilon used by every layer norm unless a caller overrides it.
pub const LAYER_NORM_EPS: f64 = 1e-5;
