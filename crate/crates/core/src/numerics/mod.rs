//! Dense `f64` tensors, a reverse-mode tape and a finite-difference checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, GradCheckReport, ParamSet, GRAD_CHECK_SAMPLES};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tensor::log_sum_exp;
pub use tensor::{affine, log_add_exp, log_sigmoid, log_softmax, sigmoid, softmax, Tensor};
