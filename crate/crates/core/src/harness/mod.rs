//! Corpus generation and ingestion, the experiment driver, reports and plots.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod synth;

pub use config::ExperimentConfig;
pub use corpus::{ingest, ingest_split, write_corpus, Corpus, Split, Utterance};
pub use pipeline::{benchmark, run_experiment, run_experiment_observed, RunSummary};
pub use plot::emit_plots;
pub use report::{csv_string, layer_report, read_csv, sweep_report, write_csv, DecodeRow, LayerRow, ReportRow};
pub use synth::{gen_corpus, SynthCorpus, SynthSpec, SynthWorld};
