//! Branch confidence measures and cascade inference.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::ctc::{greedy_decode, ProbMatrix, Transcript};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::kernels::softmax_rows;
use crate::numerics::{Eval, Exec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    /// Mean per-frame maximum posterior; exit when strictly above threshold.
    Confidence,
    /// Mean `-p ln p` over all `T × C` cells; exit when strictly below threshold.
    Entropy,
}

impl CriterionKind {
    pub fn score(self, probs: &ProbMatrix) -> f64 {
        match self {
            CriterionKind::Confidence => confidence_score(probs),
            CriterionKind::Entropy => entropy_score(probs),
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionKind::Confidence => "confidence",
            CriterionKind::Entropy => "entropy",
        })
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(CriterionKind::Confidence),
            "entropy" => Ok(CriterionKind::Entropy),
            _ => Err(Error::Config(format!("unknown criterion {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitCriterion {
    kind: CriterionKind,
    threshold: f64,
}

impl ExitCriterion {
    /// Confidence thresholds must lie in `(0, 1]`, entropy thresholds above 0.
    pub fn new(kind: CriterionKind, threshold: f64) -> Result<Self> {
        let ok = match kind {
            CriterionKind::Confidence => threshold > 0.0 && threshold <= 1.0,
            CriterionKind::Entropy => threshold > 0.0 && threshold.is_finite(),
        };
        if !ok {
            return Err(Error::Config(format!("{kind} threshold {threshold} out of range")));
        }
        Ok(Self { kind, threshold })
    }

    pub fn confidence(threshold: f64) -> Result<Self> {
        Self::new(CriterionKind::Confidence, threshold)
    }

    pub fn entropy(threshold: f64) -> Result<Self> {
        Self::new(CriterionKind::Entropy, threshold)
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// `(1/T) Σ_t max_c p[t][c]`, in `[1/C, 1]`.
///
/// Accumulated as deviations from the first frame's maximum, so frames that
/// all share one maximum (uniform or one-hot rows) give it back exactly.
pub fn confidence_score(probs: &ProbMatrix) -> f64 {
    let frames = probs.frames();
    let row_max = |t: usize| probs.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reference = row_max(0);
    let deviation: f64 = (0..frames).map(|t| row_max(t) - reference).sum();
    reference + deviation / frames as f64
}

/// `-(1/(T·C)) Σ_t Σ_c p ln p` with `0 ln 0 = 0`, in `[0, ln(C)/C]`.
pub fn entropy_score(probs: &ProbMatrix) -> f64 {
    let (frames, classes) = (probs.frames(), probs.classes());
    let mut total = 0.0;
    for t in 0..frames {
        for &p in probs.row(t) {
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    total / (frames * classes) as f64
}

/// Strict comparison: ties never exit.
pub fn should_exit(score: f64, criterion: &ExitCriterion) -> bool {
    match criterion.kind {
        CriterionKind::Confidence => score > criterion.threshold,
        CriterionKind::Entropy => score < criterion.threshold,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchScore {
    pub branch: usize,
    pub layer: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitOutcome {
    pub transcript: Transcript,
    /// Attach layer of the answering branch, or `num_layers` for the head.
    pub exit_layer: usize,
    /// Scores of every branch evaluated, in depth order.
    pub branch_scores: Vec<BranchScore>,
    pub exited_early: bool,
    /// Seconds.
    pub wall_clock: f64,
    /// Multiply-accumulates in matrix products.
    pub op_count: u64,
}

fn probs(logits: &Tensor) -> Result<ProbMatrix> {
    ProbMatrix::new(softmax_rows(logits))
}

/// Runs layers in order, scoring each branch as it is reached, and returns
/// the first branch prediction that satisfies `criterion`; the final head
/// answers when none does. Layers past the exit are never computed.
pub fn early_exit_infer(model: &Model, features: &Tensor, criterion: &ExitCriterion) -> Result<ExitOutcome> {
    cascade(model, features, Some(criterion))
}

/// Full pass through every layer and the final head, no branches.
pub fn baseline_infer(model: &Model, features: &Tensor) -> Result<ExitOutcome> {
    cascade(model, features, None)
}

fn cascade(model: &Model, features: &Tensor, criterion: Option<&ExitCriterion>) -> Result<ExitOutcome> {
    let start = Instant::now();
    let mut e = Eval::new(model.params());
    let mut h = model.embed(&mut e, features)?;
    let mut branch_scores = Vec::new();
    for layer in 1..=model.num_layers() {
        h = model.layer(&mut e, layer, &h)?;
        let (Some(criterion), Some(b)) = (criterion, model.branch_at(layer)) else {
            continue;
        };
        let logits = model.branch_logits(&mut e, b, &h)?;
        let p = probs(&logits)?;
        let score = criterion.kind.score(&p);
        branch_scores.push(BranchScore { branch: b, layer, score });
        if should_exit(score, criterion) {
            return Ok(ExitOutcome {
                transcript: greedy_decode(&p),
                exit_layer: layer,
                branch_scores,
                exited_early: true,
                wall_clock: start.elapsed().as_secs_f64(),
                op_count: e.macs(),
            });
        }
    }
    let logits = model.head_logits(&mut e, &h)?;
    let p = probs(&logits)?;
    Ok(ExitOutcome {
        transcript: greedy_decode(&p),
        exit_layer: model.num_layers(),
        branch_scores,
        exited_early: false,
        wall_clock: start.elapsed().as_secs_f64(),
        op_count: e.macs(),
    })
}

/// Output of one specific head, computed with nothing but the layers it
/// needs.
#[derive(Clone, Debug)]
pub struct ForcedOutcome {
    pub probs: ProbMatrix,
    pub transcript: Transcript,
    pub exit_layer: usize,
    pub wall_clock: f64,
    pub op_count: u64,
}

/// Forces the answer from branch `branch`, or from the final head on `None`.
pub fn forced_exit_infer(model: &Model, features: &Tensor, branch: Option<usize>) -> Result<ForcedOutcome> {
    let start = Instant::now();
    let exit_layer = match branch {
        Some(b) => {
            model
                .branches()
                .get(b)
                .ok_or_else(|| Error::Contract(format!("branch {b} out of range")))?
                .attach_layer
        }
        None => model.num_layers(),
    };
    let mut e = Eval::new(model.params());
    let mut h = model.embed(&mut e, features)?;
    for layer in 1..=exit_layer {
        h = model.layer(&mut e, layer, &h)?;
    }
    let logits = match branch {
        Some(b) => model.branch_logits(&mut e, b, &h)?,
        None => model.head_logits(&mut e, &h)?,
    };
    let p = probs(&logits)?;
    Ok(ForcedOutcome {
        transcript: greedy_decode(&p),
        probs: p,
        exit_layer,
        wall_clock: start.elapsed().as_secs_f64(),
        op_count: e.macs(),
    })
}
