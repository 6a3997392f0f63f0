use std::collections::BTreeMap;
use std::time::Instant;

use super::adam::Adam;
use super::log::{EpochRecord, Stage, StepRecord, TrainLog};
use super::{evaluate, EvalMode, TrainConfig};
use crate::ctc::{ctc_loss_on_tape, greedy_decode, wer};
use crate::error::{Error, Result};
use crate::harness::Corpus;
use crate::model::{branch_forward, encoder_forward, Model};
use crate::numerics::{Exec, ParamId, Rng, Tape, Tensor, Var};

/// Called after every completed epoch.
pub type EpochObserver<'a> = dyn FnMut(Stage, &EpochRecord) + 'a;

type GradSum = BTreeMap<ParamId, Vec<f64>>;

/// Per-utterance losses and gradient of the total.
struct UttStep {
    parts: Vec<f64>,
    total: f64,
}

impl UttStep {
    fn diverged(parts: usize) -> Self {
        Self {
            parts: vec![f64::NAN; parts],
            total: f64::NAN,
        }
    }
}

fn encode_targets(model: &Model, corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    corpus
        .utterances
        .iter()
        .map(|u| Ok(model.config().vocab.encode(&u.text)?.labels().to_vec()))
        .collect()
}

fn accumulate(sum: &mut GradSum, tape_grads: Vec<(ParamId, &[f64])>) {
    for (id, g) in tape_grads {
        match sum.get_mut(&id) {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => {
                sum.insert(id, g.to_vec());
            }
        }
    }
}

/// Averages the summed gradients over `n` utterances and clips the global
/// norm.
fn finish_gradients(sum: &mut GradSum, n: usize, clip: Option<f64>) {
    let inv = 1.0 / n as f64;
    sum.values_mut().flatten().for_each(|g| *g *= inv);
    if let Some(max) = clip {
        let norm = sum.values().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let s = max / norm;
            sum.values_mut().flatten().for_each(|g| *g *= s);
        }
    }
}

fn epoch_order(len: usize, seed: u64, stage: Stage, epoch: usize) -> Vec<usize> {
    let stream = match stage {
        Stage::Ft1 => 1_000_000,
        Stage::Ft2 => 2_000_000,
    } + epoch as u64;
    let mut order: Vec<usize> = (0..len).collect();
    Rng::derive(seed, stream).shuffle(&mut order);
    order
}

/// Shared minibatch loop: `step` computes one utterance's losses and adds
/// its gradient to the sum.
#[allow(clippy::too_many_arguments)]
fn train_loop(
    model: &mut Model,
    len: usize,
    stage: Stage,
    epochs: usize,
    config: &TrainConfig,
    mut step: impl FnMut(&Model, usize, &mut GradSum) -> Result<UttStep>,
    mut dev_wer: impl FnMut(&Model) -> Result<Vec<f64>>,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainLog> {
    config.validate()?;
    if len == 0 {
        return Err(Error::Contract(format!("{stage}: empty training corpus")));
    }
    let mut log = TrainLog::new(stage);
    let mut adam = Adam::new();
    for epoch in 1..=epochs {
        let start = Instant::now();
        let order = epoch_order(len, config.seed, stage, epoch);
        let mut epoch_parts: Vec<f64> = Vec::new();
        let mut epoch_total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = GradSum::new();
            let mut parts: Vec<f64> = Vec::new();
            let mut total = 0.0;
            for &i in batch {
                let u = step(model, i, &mut grads)?;
                if !u.total.is_finite() {
                    return Err(Error::Diverged {
                        stage: stage.as_str(),
                        epoch,
                        loss: u.total,
                    });
                }
                parts.resize(u.parts.len(), 0.0);
                parts.iter_mut().zip(&u.parts).for_each(|(a, b)| *a += b);
                total += u.total;
            }
            epoch_parts.resize(parts.len(), 0.0);
            epoch_parts.iter_mut().zip(&parts).for_each(|(a, b)| *a += b);
            epoch_total += total;
            let n = batch.len() as f64;
            log.steps.push(StepRecord {
                epoch,
                step: b + 1,
                parts: parts.iter().map(|p| p / n).collect(),
                total: total / n,
            });
            finish_gradients(&mut grads, batch.len(), config.grad_clip);
            adam.step(model.params_mut(), &grads, config);
        }
        let n = len as f64;
        let record = EpochRecord {
            epoch,
            parts: epoch_parts.iter().map(|p| p / n).collect(),
            total: epoch_total / n,
            dev_wer: dev_wer(model)?,
            wall_clock: start.elapsed().as_secs_f64(),
        };
        observer(stage, &record);
        log.epochs.push(record);
    }
    Ok(log)
}

/// First stage: CTC on the final head, updating frontend, backbone layers and
/// head. Branch parameters are frozen.
pub fn ft1_finetune(model: &mut Model, train: &Corpus, dev: Option<&Corpus>, config: &TrainConfig) -> Result<TrainLog> {
    ft1_finetune_observed(model, train, dev, config, &mut |_, _| {})
}

pub fn ft1_finetune_observed(
    model: &mut Model,
    train: &Corpus,
    dev: Option<&Corpus>,
    config: &TrainConfig,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainLog> {
    let targets = encode_targets(model, train)?;
    let step = |model: &Model, i: usize, grads: &mut GradSum| -> Result<UttStep> {
        let store = model.params();
        let mut tape = Tape::with_trainable(store, move |id| store.entry(id).group.is_backbone());
        let mut h = model.embed(&mut tape, &train.utterances[i].features)?;
        for layer in 1..=model.num_layers() {
            h = model.layer(&mut tape, layer, &h)?;
        }
        let logits = model.head_logits(&mut tape, &h)?;
        let lp = tape.log_softmax_rows(&logits);
        if !tape.value(&lp).is_finite() {
            return Ok(UttStep::diverged(0));
        }
        let loss = ctc_loss_on_tape(&mut tape, lp, &targets[i])?;
        let total = tape.scalar(loss);
        if total.is_finite() {
            accumulate(grads, tape.backward(loss)?.params());
        }
        Ok(UttStep { parts: Vec::new(), total })
    };
    let dev_wer = |model: &Model| -> Result<Vec<f64>> {
        match dev {
            Some(d) => Ok(vec![evaluate(model, d, EvalMode::Baseline)?.wer]),
            None => Ok(Vec::new()),
        }
    };
    train_loop(model, train.len(), Stage::Ft1, config.epochs_ft1, config, step, dev_wer, observer)
}

/// Hidden states at every branch's attach layer, computed once with the
/// frozen backbone.
fn cache_branch_inputs(model: &Model, corpus: &Corpus) -> Result<Vec<Vec<Tensor>>> {
    let deepest = model.branches().iter().map(|b| b.attach_layer).max().unwrap_or(1);
    corpus
        .utterances
        .iter()
        .map(|u| {
            let states = encoder_forward(model, &u.features, Some(deepest))?.states;
            Ok(model
                .branches()
                .iter()
                .map(|b| states[b.attach_layer - 1].clone())
                .collect())
        })
        .collect()
}

/// Second stage: the summed CTC loss of every exit branch, updating branch
/// parameters only.
pub fn ft2_branches(model: &mut Model, train: &Corpus, dev: Option<&Corpus>, config: &TrainConfig) -> Result<TrainLog> {
    ft2_branches_observed(model, train, dev, config, &mut |_, _| {})
}

pub fn ft2_branches_observed(
    model: &mut Model,
    train: &Corpus,
    dev: Option<&Corpus>,
    config: &TrainConfig,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainLog> {
    let n_branches = model.branches().len();
    if n_branches == 0 {
        return Err(Error::Contract("ft2: model has no exit branches".into()));
    }
    let targets = encode_targets(model, train)?;
    let cached = cache_branch_inputs(model, train)?;
    let dev_cached = dev.map(|d| cache_branch_inputs(model, d)).transpose()?;

    let step = |model: &Model, i: usize, grads: &mut GradSum| -> Result<UttStep> {
        let store = model.params();
        let mut tape = Tape::with_trainable(store, move |id| !store.entry(id).group.is_backbone());
        let mut losses: Vec<Var> = Vec::with_capacity(n_branches);
        for (b, hidden) in cached[i].iter().enumerate() {
            let h = tape.constant(hidden.clone());
            let logits = model.branch_logits(&mut tape, b, &h)?;
            let lp = tape.log_softmax_rows(&logits);
            if !tape.value(&lp).is_finite() {
                return Ok(UttStep::diverged(n_branches));
            }
            losses.push(ctc_loss_on_tape(&mut tape, lp, &targets[i])?);
        }
        let mut total = losses[0];
        for l in &losses[1..] {
            total = tape.add(&total, l)?;
        }
        let parts: Vec<f64> = losses.iter().map(|&l| tape.scalar(l)).collect();
        let value = tape.scalar(total);
        if value.is_finite() {
            accumulate(grads, tape.backward(total)?.params());
        }
        Ok(UttStep { parts, total: value })
    };
    let dev_wer = |model: &Model| -> Result<Vec<f64>> {
        let (Some(d), Some(states)) = (dev, dev_cached.as_ref()) else {
            return Ok(Vec::new());
        };
        let refs: Vec<&str> = d.utterances.iter().map(|u| u.text.as_str()).collect();
        (0..n_branches)
            .map(|b| {
                let hyps = states
                    .iter()
                    .map(|s| Ok(model.config().vocab.decode(&greedy_decode(&branch_forward(model, b, &s[b])?))))
                    .collect::<Result<Vec<String>>>()?;
                let hyps: Vec<&str> = hyps.iter().map(String::as_str).collect();
                wer(&refs, &hyps)
            })
            .collect()
    };
    train_loop(model, train.len(), Stage::Ft2, config.epochs_ft2, config, step, dev_wer, observer)
}
