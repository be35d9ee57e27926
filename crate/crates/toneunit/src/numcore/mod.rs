//! Minimal differentiable numeric core.
//!
//! Dense row-major `f64` matrices, explicit forward/backward pairs for the
//! handful of operations the model needs, a decoupled-weight-decay AdamW,
//! a portable counter-based random source, and a central finite-difference
//! gradient checker. There is no general autodiff graph: the model is a
//! fixed small pipeline and paired routines keep the numerics auditable.

mod array;
mod gradcheck;
mod ops;
mod optim;
mod rng;

pub use array::Array2;
pub use gradcheck::grad_check;
pub use ops::{
    conv1d_backward, conv1d_forward, conv1d_output_len, linear_backward, linear_forward,
    log_softmax, log_softmax_backward, relu, relu_backward, softmax_row, Conv1dKernel, Padding,
};
pub use optim::{AdamW, AdamWConfig, ParamTensor};
pub use rng::{gumbel_from_uniform, Rng};
