//! Early-exit cascade inference for CTC speech-recognition encoders.
//!
//! A transformer backbone with a final CTC head is trained first; exit
//! branches attached to intermediate layers are then trained on the frozen
//! backbone. At inference the cascade evaluates branches in depth order and
//! returns the first prediction whose confidence (mean per-frame maximum
//! posterior) or entropy clears a threshold, skipping every deeper layer.

pub mod ctc;
mod error;
pub mod exit;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Rng, Tensor};
