//! Dense `f64` tensors, forward kernels and a reverse-mode tape.

pub mod exec;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
mod params;
mod rng;
mod tape;
mod tensor;

pub use exec::{Eval, Exec, Val};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{ParamEntry, ParamGroup, ParamId, ParamStore};
pub use rng::{Rng, ALGORITHM as RNG_ALGORITHM};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
