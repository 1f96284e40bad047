//! Dense tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_detailed, relative_error, GradCheckReport, REL_FLOOR};
pub use tape::{Gradients, Tape, Var, SIGMOID_CLAMP};
pub use tensor::Tensor;
