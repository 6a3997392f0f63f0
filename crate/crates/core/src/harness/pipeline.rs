//! End-to-end experiment: corpus → FT1 → FT2 → baseline and threshold grid
//! evaluation → reports and plots, all under one output directory.
//!
//! ```text
//! <out>/config.toml        resolved configuration
//! <out>/environment.txt    machine the timings were taken on
//! <out>/corpus/<split>/    manifests and feature files
//! <out>/ft1.ckpt  ft1.log  after the first stage
//! <out>/ft2.ckpt  ft2.log  final model
//! <out>/report.csv         baseline row + one row per grid point
//! <out>/decodes.csv        per-utterance decodes behind every report row
//! <out>/layers.csv         forced-exit quality per branch and head
//! <out>/plots/*.svg
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::corpus::{ingest_split, Corpus, Split};
use super::plot::emit_plots;
use super::report::{layer_report, sweep_report, write_csv, DecodeRow, LayerRow, ReportRow};
use super::synth::gen_corpus;
use crate::error::{Error, Result};
use crate::exit::CriterionKind;
use crate::model::{build_model, save_checkpoint, Model};
use crate::training::{
    evaluate, ft1_finetune_observed, ft2_branches_observed, EpochObserver, EvalMode, TrainLog,
};

pub const REPORT_FILE: &str = "report.csv";
pub const DECODES_FILE: &str = "decodes.csv";
pub const LAYERS_FILE: &str = "layers.csv";
pub const FT1_CHECKPOINT: &str = "ft1.ckpt";
pub const FINAL_CHECKPOINT: &str = "ft2.ckpt";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub report: Vec<ReportRow>,
    pub layers: Vec<LayerRow>,
    pub ft1_log: TrainLog,
    pub ft2_log: TrainLog,
    pub final_checksum: String,
    pub out_dir: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn environment_text() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "os={}\narch={}\navailable_parallelism={threads}\nevaluation=single-threaded, batch 1\nprecision=f64\n",
        std::env::consts::OS,
        std::env::consts::ARCH,
    )
}

/// Baseline row plus both threshold grids, with the decodes behind every row.
pub fn benchmark(model: &Model, corpus: &Corpus, config: &ExperimentConfig) -> Result<(Vec<ReportRow>, Vec<DecodeRow>)> {
    let baseline = evaluate(model, corpus, EvalMode::Baseline).map_err(|e| e.in_stage("eval"))?;
    let base_row = ReportRow::baseline(&baseline);
    let mut decodes: Vec<DecodeRow> = DecodeRow::rows(&base_row, &baseline).collect();
    let mut rows = vec![base_row];
    for (kind, grid) in [
        (CriterionKind::Confidence, &config.confidence_thresholds),
        (CriterionKind::Entropy, &config.entropy_thresholds),
    ] {
        for p in sweep_report(model, corpus, kind, grid, &baseline).map_err(|e| e.in_stage("sweep"))? {
            decodes.extend(DecodeRow::rows(&p.row, &p.result));
            rows.push(p.row);
        }
    }
    Ok((rows, decodes))
}

pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    run_experiment_observed(config, out_dir, &mut |_, _| {})
}

pub fn run_experiment_observed(
    config: &ExperimentConfig,
    out_dir: &Path,
    observer: &mut EpochObserver<'_>,
) -> Result<RunSummary> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e).in_stage("config"))?;
    write_text(&out_dir.join("config.toml"), &config.to_text()).map_err(|e| e.in_stage("config"))?;
    write_text(&out_dir.join("environment.txt"), &environment_text()).map_err(|e| e.in_stage("config"))?;

    let corpus_dir = out_dir.join("corpus");
    gen_corpus(&config.synth_spec(), &corpus_dir).map_err(|e| e.in_stage("gen"))?;
    // reports run on what was written, not on the in-memory copy
    let load = |split| ingest_split(&corpus_dir, split).map_err(|e| e.in_stage("ingest"));
    let (train, dev) = (load(Split::Train)?, load(Split::Dev)?);
    let eval_corpus = load(config.eval_split()?)?;

    let model_config = config.model_config().map_err(|e| e.in_stage("ft1"))?;
    let train_config = config.train_config();
    let mut model = build_model(&model_config).map_err(|e| e.in_stage("ft1"))?;

    let ft1_log = ft1_finetune_observed(&mut model, &train, Some(&dev), &train_config, observer)
        .map_err(|e| e.in_stage("ft1"))?;
    save_checkpoint(&model, out_dir.join(FT1_CHECKPOINT)).map_err(|e| e.in_stage("ft1"))?;
    write_text(&out_dir.join("ft1.log"), &ft1_log.to_text()).map_err(|e| e.in_stage("ft1"))?;

    let ft2_log = ft2_branches_observed(&mut model, &train, Some(&dev), &train_config, observer)
        .map_err(|e| e.in_stage("ft2"))?;
    save_checkpoint(&model, out_dir.join(FINAL_CHECKPOINT)).map_err(|e| e.in_stage("ft2"))?;
    write_text(&out_dir.join("ft2.log"), &ft2_log.to_text()).map_err(|e| e.in_stage("ft2"))?;

    let (report, decodes) = benchmark(&model, &eval_corpus, config)?;
    write_csv(&out_dir.join(REPORT_FILE), &report).map_err(|e| e.in_stage("eval"))?;
    write_csv(&out_dir.join(DECODES_FILE), &decodes).map_err(|e| e.in_stage("eval"))?;

    let layers = layer_report(&model, &eval_corpus).map_err(|e| e.in_stage("layers"))?;
    write_csv(&out_dir.join(LAYERS_FILE), &layers).map_err(|e| e.in_stage("layers"))?;

    emit_plots(&report, &out_dir.join("plots")).map_err(|e| e.in_stage("plot"))?;

    Ok(RunSummary {
        report,
        layers,
        ft1_log,
        ft2_log,
        final_checksum: model.checksum(),
        out_dir: out_dir.to_path_buf(),
    })
}
