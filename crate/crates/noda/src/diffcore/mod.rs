//! Reverse-mode automatic differentiation over dense f64 tensors, with an
//! Adam optimizer and a finite-difference gradient checker. Everything the
//! other modules train runs through this tape.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
