//! Benchmark, sweep and per-layer tables, written as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit::{confidence_score, entropy_score, forced_exit_infer, CriterionKind, ExitCriterion};
use crate::harness::Corpus;
use crate::model::Model;
use crate::training::{evaluate, saving, EvalMode, EvalResult, UtteranceResult};

pub const BASELINE_LABEL: &str = "baseline";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `baseline`, `confidence` or `entropy`.
    pub criterion: String,
    /// Empty for the baseline row.
    pub threshold: Option<f64>,
    pub wer: f64,
    pub mean_wall_clock: f64,
    pub mean_op_count: f64,
    pub time_saving: f64,
    pub op_saving: f64,
    pub mean_exit_layer: f64,
    /// `layer:count` pairs for every layer that answered, e.g. `2:61;8:39`.
    pub exit_histogram: String,
}

impl ReportRow {
    pub fn measured(criterion: String, threshold: Option<f64>, result: &EvalResult, baseline: &EvalResult) -> Self {
        let mut layers: Vec<usize> = result.utterances.iter().map(|u| u.exit_layer).collect();
        layers.sort_unstable();
        let mut hist: Vec<(usize, usize)> = Vec::new();
        for l in layers {
            match hist.last_mut() {
                Some((last, n)) if *last == l => *n += 1,
                _ => hist.push((l, 1)),
            }
        }
        Self {
            criterion,
            threshold,
            wer: result.wer,
            mean_wall_clock: result.mean_wall_clock,
            mean_op_count: result.mean_op_count,
            time_saving: saving(baseline.mean_wall_clock, result.mean_wall_clock),
            op_saving: saving(baseline.mean_op_count, result.mean_op_count),
            mean_exit_layer: result.mean_exit_layer,
            exit_histogram: hist.iter().map(|(l, n)| format!("{l}:{n}")).collect::<Vec<_>>().join(";"),
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.criterion == BASELINE_LABEL
    }

    /// Parsed `exit_histogram`.
    pub fn histogram(&self) -> Result<Vec<(usize, usize)>> {
        if self.exit_histogram.is_empty() {
            return Ok(Vec::new());
        }
        self.exit_histogram
            .split(';')
            .map(|pair| {
                let parsed = pair
                    .split_once(':')
                    .and_then(|(l, n)| Some((l.parse().ok()?, n.parse().ok()?)));
                parsed.ok_or_else(|| Error::Config(format!("bad histogram entry {pair:?}")))
            })
            .collect()
    }

    /// The baseline row saves nothing by definition.
    pub fn baseline(result: &EvalResult) -> Self {
        let mut row = Self::measured(BASELINE_LABEL.into(), None, result, result);
        row.time_saving = 0.0;
        row.op_saving = 0.0;
        row
    }
}

/// A report row together with the decodes behind it.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub row: ReportRow,
    pub result: EvalResult,
}

/// One row per threshold, in the given order; duplicates are kept.
pub fn sweep_report(
    model: &Model,
    corpus: &Corpus,
    kind: CriterionKind,
    thresholds: &[f64],
    baseline: &EvalResult,
) -> Result<Vec<SweepPoint>> {
    thresholds
        .iter()
        .map(|&t| {
            let criterion = ExitCriterion::new(kind, t)?;
            let result = evaluate(model, corpus, EvalMode::Policy(criterion))?;
            Ok(SweepPoint {
                row: ReportRow::measured(kind.to_string(), Some(t), &result, baseline),
                result,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    /// `branch1`, `branch2`, ... or `head`.
    pub exit: String,
    pub layer: usize,
    pub wer: f64,
    pub mean_confidence: f64,
    pub mean_entropy: f64,
    pub mean_op_count: f64,
}

/// Forced-exit quality and certainty of every branch and of the final head,
/// in depth order.
pub fn layer_report(model: &Model, corpus: &Corpus) -> Result<Vec<LayerRow>> {
    let exits: Vec<Option<usize>> = (0..model.branches().len()).map(Some).chain([None]).collect();
    let n = corpus.len() as f64;
    exits
        .into_iter()
        .map(|b| {
            let mut conf = 0.0;
            let mut ent = 0.0;
            let mut results = Vec::with_capacity(corpus.len());
            let mut layer = model.num_layers();
            for u in &corpus.utterances {
                let o = forced_exit_infer(model, &u.features, b)?;
                conf += confidence_score(&o.probs);
                ent += entropy_score(&o.probs);
                layer = o.exit_layer;
                results.push(UtteranceResult {
                    id: u.id.clone(),
                    reference: u.text.clone(),
                    hypothesis: model.config().vocab.decode(&o.transcript),
                    exit_layer: o.exit_layer,
                    op_count: o.op_count,
                    wall_clock: o.wall_clock,
                });
            }
            let summary = crate::training::summarize(results)?;
            Ok(LayerRow {
                exit: b.map_or("head".to_string(), |i| format!("branch{}", i + 1)),
                layer,
                wer: summary.wer,
                mean_confidence: conf / n,
                mean_entropy: ent / n,
                mean_op_count: summary.mean_op_count,
            })
        })
        .collect()
}

/// One line of the per-utterance decode artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRow {
    pub criterion: String,
    pub threshold: Option<f64>,
    pub id: String,
    pub exit_layer: usize,
    pub op_count: u64,
    pub wall_clock: f64,
    pub reference: String,
    pub hypothesis: String,
}

impl DecodeRow {
    pub fn rows<'a>(row: &ReportRow, result: &'a EvalResult) -> impl Iterator<Item = DecodeRow> + 'a {
        let (criterion, threshold) = (row.criterion.clone(), row.threshold);
        result.utterances.iter().map(move |u| DecodeRow {
            criterion: criterion.clone(),
            threshold,
            id: u.id.clone(),
            exit_layer: u.exit_layer,
            op_count: u.op_count,
            wall_clock: u.wall_clock,
            reference: u.reference.clone(),
            hypothesis: u.hypothesis.clone(),
        })
    }

    pub fn into_result(self) -> UtteranceResult {
        UtteranceResult {
            id: self.id,
            reference: self.reference,
            hypothesis: self.hypothesis,
            exit_layer: self.exit_layer,
            op_count: self.op_count,
            wall_clock: self.wall_clock,
        }
    }
}

/// CSV text with a header row.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output of UTF-8 fields"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let text = csv_string(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))
}
