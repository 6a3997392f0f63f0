//! CTC supervision and evaluation: loss with gradients, greedy decoding and
//! word error rate.

mod decode;
mod loss;
mod metrics;
mod prob;
mod vocab;

pub use decode::{argmax_path, greedy_decode, greedy_decode_scores};
pub use loss::{
    collapse, ctc_brute_force, ctc_loss, ctc_loss_on_tape, is_feasible, repeat_count, CtcLoss,
    BRUTE_FORCE_LIMIT,
};
pub use metrics::{edit_distance, wer, wer_counts, words};
pub use prob::{ProbMatrix, ROW_SUM_TOL};
pub use vocab::{Transcript, Vocab, BLANK, BLANK_SYMBOL, WORD_SEPARATOR};
