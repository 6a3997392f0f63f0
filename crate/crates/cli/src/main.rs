use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use earlyexit::exit::{CriterionKind, ExitCriterion};
use earlyexit::harness::{
    csv_string, emit_plots, gen_corpus, ingest_split, layer_report, read_csv, run_experiment_observed, sweep_report,
    write_csv, Corpus, ExperimentConfig, ReportRow, Split,
};
use earlyexit::model::{build_model, load_checkpoint, save_checkpoint, Model};
use earlyexit::training::{
    evaluate, ft1_finetune_observed, ft2_branches_observed, EpochRecord, EvalMode, Stage, TrainLog,
};
use serde::Serialize;
use earlyexit::{Error, Result};

/// Early-exit CTC experiments: corpus generation, two-stage fine-tuning,
/// evaluation, threshold sweeps and plots.
#[derive(Parser, Debug)]
#[command(name = "earlyexit", version)]
struct Cli {
    /// Key-value config file; keys not given keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides a config key, e.g. `--set noise_std=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic train/dev/test corpus.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// First fine-tuning stage: backbone and final head.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Start from this checkpoint instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Second fine-tuning stage: exit branches on the frozen backbone.
    Branches {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Decode a split in one mode: `baseline`, `branch<N>` (1-based),
    /// `confidence:<t>` or `entropy:<t>`.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "baseline")]
        mode: String,
        /// Defaults to the config's `eval_split`.
        #[arg(long)]
        split: Option<Split>,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trade-off table for one criterion over a threshold list, led by
    /// the baseline row.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        criterion: CriterionKind,
        /// Comma-separated; defaults to the config's grid for the criterion.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forced-exit WER, confidence and entropy per branch and final head.
    Layers {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG plots from a report CSV.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: gen, train, branches, eval, sweeps, layers, plot.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

fn progress(quiet: bool) -> impl FnMut(Stage, &EpochRecord) {
    move |stage, e| {
        if !quiet {
            let wer: Vec<String> = e.dev_wer.iter().map(|w| format!("{w:.4}")).collect();
            eprintln!(
                "{stage} epoch {:>3}  {} {:.6}  dev wer [{}]  {:.1}s",
                e.epoch,
                stage.total_name(),
                e.total,
                wer.join(", "),
                e.wall_clock
            );
        }
    }
}

fn write_log(path: Option<&Path>, log: &TrainLog) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, log.to_text()).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => Ok(()),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(p) => write_csv(p, rows),
        None => {
            print!("{}", csv_string(rows)?);
            Ok(())
        }
    }
}

fn parse_mode(mode: &str, model: &Model) -> Result<EvalMode> {
    let bad = || Error::Config(format!("unknown eval mode {mode:?}"));
    if mode == "baseline" {
        return Ok(EvalMode::Baseline);
    }
    if let Some(n) = mode.strip_prefix("branch") {
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 || n > model.branches().len() {
            return Err(Error::Config(format!(
                "{mode}: model has {} branches (1-based)",
                model.branches().len()
            )));
        }
        return Ok(EvalMode::Branch(n - 1));
    }
    let (kind, t) = mode.split_once(':').ok_or_else(bad)?;
    let t: f64 = t.parse().map_err(|_| bad())?;
    Ok(EvalMode::Policy(ExitCriterion::new(kind.parse()?, t)?))
}

fn load_split(corpus: &Path, split: Option<Split>, config: &ExperimentConfig) -> Result<Corpus> {
    let split = match split {
        Some(s) => s,
        None => config.eval_split()?,
    };
    ingest_split(corpus, split)
}

fn execute(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::from_overrides(&overrides),
    }
    .map_err(|e| e.in_stage("config"))?;
    let mut observer = progress(cli.quiet);

    match cli.command {
        Command::Gen { out } => {
            let c = gen_corpus(&config.synth_spec(), &out).map_err(|e| e.in_stage("gen"))?;
            println!(
                "wrote {} train, {} dev, {} test utterances to {}",
                c.train.len(),
                c.dev.len(),
                c.test.len(),
                out.display()
            );
        }
        Command::Train { corpus, init, out, log } => {
            let stage = |e: Error| e.in_stage("ft1");
            let train = ingest_split(&corpus, Split::Train).map_err(|e| e.in_stage("ingest"))?;
            let dev = ingest_split(&corpus, Split::Dev).map_err(|e| e.in_stage("ingest"))?;
            let mut model = match init {
                Some(p) => load_checkpoint(p),
                None => config.model_config().and_then(|c| build_model(&c)),
            }
            .map_err(stage)?;
            let tl = ft1_finetune_observed(&mut model, &train, Some(&dev), &config.train_config(), &mut observer)
                .map_err(stage)?;
            save_checkpoint(&model, &out).map_err(stage)?;
            write_log(log.as_deref(), &tl).map_err(stage)?;
        }
        Command::Branches {
            corpus,
            checkpoint,
            out,
            log,
        } => {
            let stage = |e: Error| e.in_stage("ft2");
            let train = ingest_split(&corpus, Split::Train).map_err(|e| e.in_stage("ingest"))?;
            let dev = ingest_split(&corpus, Split::Dev).map_err(|e| e.in_stage("ingest"))?;
            let mut model = load_checkpoint(&checkpoint).map_err(stage)?;
            let tl = ft2_branches_observed(&mut model, &train, Some(&dev), &config.train_config(), &mut observer)
                .map_err(stage)?;
            save_checkpoint(&model, &out).map_err(stage)?;
            write_log(log.as_deref(), &tl).map_err(stage)?;
        }
        Command::Eval {
            corpus,
            checkpoint,
            mode,
            split,
            out,
        } => {
            let stage = |e: Error| e.in_stage("eval");
            let model = load_checkpoint(&checkpoint).map_err(stage)?;
            let data = load_split(&corpus, split, &config).map_err(stage)?;
            let mode = parse_mode(&mode, &model).map_err(stage)?;
            let baseline = evaluate(&model, &data, EvalMode::Baseline).map_err(stage)?;
            let row = match mode {
                EvalMode::Baseline => ReportRow::baseline(&baseline),
                EvalMode::Branch(b) => {
                    let r = evaluate(&model, &data, mode).map_err(stage)?;
                    ReportRow::measured(format!("branch{}", b + 1), None, &r, &baseline)
                }
                EvalMode::Policy(c) => {
                    let r = evaluate(&model, &data, mode).map_err(stage)?;
                    ReportRow::measured(c.kind().to_string(), Some(c.threshold()), &r, &baseline)
                }
            };
            emit(out.as_deref(), &[row]).map_err(stage)?;
        }
        Command::Sweep {
            corpus,
            checkpoint,
            criterion,
            thresholds,
            split,
            out,
        } => {
            let stage = |e: Error| e.in_stage("sweep");
            let model = load_checkpoint(&checkpoint).map_err(stage)?;
            let data = load_split(&corpus, split, &config).map_err(stage)?;
            let grid = if !thresholds.is_empty() {
                thresholds
            } else {
                match criterion {
                    CriterionKind::Confidence => config.confidence_thresholds.clone(),
                    CriterionKind::Entropy => config.entropy_thresholds.clone(),
                }
            };
            let baseline = evaluate(&model, &data, EvalMode::Baseline).map_err(stage)?;
            let mut rows = vec![ReportRow::baseline(&baseline)];
            rows.extend(
                sweep_report(&model, &data, criterion, &grid, &baseline)
                    .map_err(stage)?
                    .into_iter()
                    .map(|p| p.row),
            );
            emit(out.as_deref(), &rows).map_err(stage)?;
        }
        Command::Layers {
            corpus,
            checkpoint,
            split,
            out,
        } => {
            let stage = |e: Error| e.in_stage("layers");
            let model = load_checkpoint(&checkpoint).map_err(stage)?;
            let data = load_split(&corpus, split, &config).map_err(stage)?;
            let rows = layer_report(&model, &data).map_err(stage)?;
            emit(out.as_deref(), &rows).map_err(stage)?;
        }
        Command::Plot { report, out } => {
            let stage = |e: Error| e.in_stage("plot");
            let rows: Vec<ReportRow> = read_csv(&report).map_err(stage)?;
            for p in emit_plots(&rows, &out).map_err(stage)? {
                println!("{}", p.display());
            }
        }
        Command::Run { out } => {
            let summary = run_experiment_observed(&config, &out, &mut observer)?;
            print!("{}", csv_string(&summary.report).map_err(|e| e.in_stage("eval"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
