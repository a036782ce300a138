//! Dense tensors, the layer kernels built on them, and reverse-mode
//! differentiation.

pub mod gradcheck;
pub mod ops;
mod scalar;
pub mod tape;
mod tensor;

pub use ops::{layer_norm, matmul, softmax_masked, Activation};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
