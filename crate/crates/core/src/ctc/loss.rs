//! CTC loss by forward–backward over the blank-interleaved label sequence,
//! entirely in log space.

use super::{ProbMatrix, BLANK};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Path budget for [`ctc_brute_force`].
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct CtcLoss {
    /// `-log p(target | input)`.
    pub loss: f64,
    /// d loss / d log_probs, `T × C`.
    pub grad: Tensor,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Number of adjacent equal labels; each needs a separating blank frame.
pub fn repeat_count(target: &[usize]) -> usize {
    target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Whether `frames` frames can carry `target` under CTC.
pub fn is_feasible(frames: usize, target: &[usize]) -> bool {
    target.len() + repeat_count(target) <= frames
}

/// CTC negative log-likelihood of `target` given per-frame log posteriors,
/// with its gradient.
pub fn ctc_loss(log_probs: &Tensor, target: &[usize]) -> Result<CtcLoss> {
    if log_probs.shape().len() != 2 {
        return Err(Error::dim("ctc_loss", format!("{:?}", log_probs.shape())));
    }
    let (frames, classes) = (log_probs.rows(), log_probs.cols());
    if let Some(&bad) = target.iter().find(|&&l| l == BLANK || l >= classes) {
        return Err(Error::Contract(format!("target label {bad} is blank or out of range")));
    }
    if !is_feasible(frames, target) {
        return Err(Error::InfeasibleTarget {
            frames,
            labels: target.len(),
            repeats: repeat_count(target),
        });
    }

    let ext: Vec<usize> = std::iter::once(BLANK)
        .chain(target.iter().flat_map(|&l| [l, BLANK]))
        .collect();
    let s_len = ext.len();
    let lp = |t: usize, s: usize| log_probs.data()[t * classes + ext[s]];
    // skip transitions s-2 -> s are allowed onto a label that differs from
    // the label two positions back
    let can_skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; frames * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = if a == neg { neg } else { a + lp(t, s) };
        }
    }

    let mut beta = vec![neg; frames * s_len];
    let last = (frames - 1) * s_len;
    beta[last + s_len - 1] = lp(frames - 1, s_len - 1);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(frames - 1, s_len - 2);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            beta[t * s_len + s] = if b == neg { neg } else { b + lp(t, s) };
        }
    }

    let end = &alpha[last..];
    let log_likelihood = if s_len > 1 {
        log_add(end[s_len - 1], end[s_len - 2])
    } else {
        end[0]
    };
    if !log_likelihood.is_finite() {
        return Err(Error::Contract(format!("target has zero probability (log p = {log_likelihood})")));
    }

    // d(-log p)/d lp[t][c] = -exp(logsumexp_{s: ext[s]=c}(alpha + beta - lp) - log p)
    let mut occupancy = vec![neg; frames * classes];
    for t in 0..frames {
        for s in 0..s_len {
            let (a, b) = (alpha[t * s_len + s], beta[t * s_len + s]);
            if a == neg || b == neg {
                continue;
            }
            let slot = &mut occupancy[t * classes + ext[s]];
            *slot = log_add(*slot, a + b - lp(t, s));
        }
    }
    let grad = occupancy
        .into_iter()
        .map(|o| if o == neg { 0.0 } else { -(o - log_likelihood).exp() })
        .collect();

    Ok(CtcLoss {
        loss: -log_likelihood,
        grad: Tensor::new(&[frames, classes], grad)?,
    })
}

/// Records the CTC loss of `target` on the tape as a differentiable scalar
/// of `log_probs`.
pub fn ctc_loss_on_tape(tape: &mut Tape<'_>, log_probs: Var, target: &[usize]) -> Result<Var> {
    use crate::numerics::Exec;
    let out = ctc_loss(tape.value(&log_probs), target)?;
    tape.scalar_with_grad(log_probs, out.loss, out.grad.into_data())
}

/// Collapses a frame path: merge repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != BLANK {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Total probability of `target` by enumerating all `C^T` frame paths.
pub fn ctc_brute_force(probs: &ProbMatrix, target: &[usize]) -> Result<f64> {
    let (frames, classes) = (probs.frames(), probs.classes());
    let paths = (classes as f64).powi(frames as i32);
    if paths > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::EnumerationLimit {
            paths,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if target.len() > frames {
        return Ok(0.0);
    }
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if collapse(&path) == target {
            total += path.iter().enumerate().map(|(t, &c)| probs.row(t)[c]).product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                return Ok(total);
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}
