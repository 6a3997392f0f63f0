use std::fmt;

use crate::ctc::wer;
use crate::error::{Error, Result};
use crate::exit::{baseline_infer, early_exit_infer, forced_exit_infer, ExitCriterion};
use crate::harness::Corpus;
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    /// Full backbone and final head.
    Baseline,
    /// Forced exit at branch `i` for every utterance.
    Branch(usize),
    /// Early-exit cascade under a criterion.
    Policy(ExitCriterion),
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMode::Baseline => f.write_str("baseline"),
            EvalMode::Branch(i) => write!(f, "branch{}", i + 1),
            EvalMode::Policy(c) => write!(f, "{}@{}", c.kind(), c.threshold()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceResult {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub exit_layer: usize,
    pub op_count: u64,
    pub wall_clock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub wer: f64,
    pub mean_wall_clock: f64,
    pub mean_op_count: f64,
    pub mean_exit_layer: f64,
    /// In corpus order.
    pub utterances: Vec<UtteranceResult>,
}

impl EvalResult {
    /// Number of utterances answered at each layer `1..=num_layers`; index 0
    /// is layer 1.
    pub fn exit_histogram(&self, num_layers: usize) -> Vec<usize> {
        let mut h = vec![0; num_layers];
        for u in &self.utterances {
            if let Some(slot) = u.exit_layer.checked_sub(1).and_then(|i| h.get_mut(i)) {
                *slot += 1;
            }
        }
        h
    }
}

/// Relative reduction of `cost` against `baseline`.
pub fn saving(baseline: f64, cost: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - cost) / baseline
    }
}

/// Decodes every utterance of `corpus` in `mode` and aggregates.
pub fn evaluate(model: &Model, corpus: &Corpus, mode: EvalMode) -> Result<EvalResult> {
    if corpus.is_empty() {
        return Err(Error::Contract("evaluate: empty corpus".into()));
    }
    let vocab = &model.config().vocab;
    let mut utterances = Vec::with_capacity(corpus.len());
    for u in &corpus.utterances {
        let (transcript, exit_layer, op_count, wall_clock) = match mode {
            EvalMode::Baseline => {
                let o = baseline_infer(model, &u.features)?;
                (o.transcript, o.exit_layer, o.op_count, o.wall_clock)
            }
            EvalMode::Policy(c) => {
                let o = early_exit_infer(model, &u.features, &c)?;
                (o.transcript, o.exit_layer, o.op_count, o.wall_clock)
            }
            EvalMode::Branch(b) => {
                let o = forced_exit_infer(model, &u.features, Some(b))?;
                (o.transcript, o.exit_layer, o.op_count, o.wall_clock)
            }
        };
        utterances.push(UtteranceResult {
            id: u.id.clone(),
            reference: u.text.clone(),
            hypothesis: vocab.decode(&transcript),
            exit_layer,
            op_count,
            wall_clock,
        });
    }
    summarize(utterances)
}

/// Aggregates per-utterance results, e.g. ones reloaded from a decode file.
pub fn summarize(utterances: Vec<UtteranceResult>) -> Result<EvalResult> {
    let n = utterances.len().max(1) as f64;
    let refs: Vec<&str> = utterances.iter().map(|u| u.reference.as_str()).collect();
    let hyps: Vec<&str> = utterances.iter().map(|u| u.hypothesis.as_str()).collect();
    Ok(EvalResult {
        wer: wer(&refs, &hyps)?,
        mean_wall_clock: utterances.iter().map(|u| u.wall_clock).sum::<f64>() / n,
        mean_op_count: utterances.iter().map(|u| u.op_count as f64).sum::<f64>() / n,
        mean_exit_layer: utterances.iter().map(|u| u.exit_layer as f64).sum::<f64>() / n,
        utterances,
    })
}
