//! Two-stage fine-tuning: CTC on the final head with branches frozen, then
//! the summed branch CTC loss with everything else frozen.

mod adam;
mod config;
mod eval;
mod finetune;
mod log;

pub use adam::{adam_step, Adam, Moments};
pub use config::TrainConfig;
pub use eval::{evaluate, saving, summarize, EvalMode, EvalResult, UtteranceResult};
pub use finetune::{ft1_finetune, ft1_finetune_observed, ft2_branches, ft2_branches_observed, EpochObserver};
pub use log::{EpochRecord, Stage, StepRecord, TrainLog};
