//! Experiment configuration: one flat file of `key = value` lines (TOML
//! syntax), every key overridable with `key=value` strings.
//!
//! ```text
//! seed = 7
//! noise_std = 0.1
//! branch_layers = [2, 4, 6]
//! confidence_thresholds = [0.9, 0.95, 0.98, 0.99, 1.0]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::Split;
use super::synth::SynthSpec;
use crate::ctc::Vocab;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds corpus generation, initialization and batch order.
    pub seed: u64,

    pub alphabet: String,
    pub lexicon_size: usize,
    pub word_len_min: usize,
    pub word_len_max: usize,
    pub words_min: usize,
    pub words_max: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,

    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub branch_layers: Vec<usize>,
    pub d_ee: usize,
    pub branch_heads: usize,

    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs_ft1: usize,
    pub epochs_ft2: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; absent or 0 disables it.
    pub grad_clip: f64,

    /// Split that reports are computed on.
    pub eval_split: String,
    pub confidence_thresholds: Vec<f64>,
    pub entropy_thresholds: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let model = ModelConfig::desk();
        let train = TrainConfig::default();
        Self {
            seed: synth.seed,
            alphabet: synth.alphabet,
            lexicon_size: synth.lexicon_size,
            word_len_min: synth.word_len.0,
            word_len_max: synth.word_len.1,
            words_min: synth.words_per_utterance.0,
            words_max: synth.words_per_utterance.1,
            frames_min: synth.frames_per_char.0,
            frames_max: synth.frames_per_char.1,
            feature_dim: synth.feature_dim,
            noise_std: synth.noise_std,
            train_size: synth.train_size,
            dev_size: synth.dev_size,
            test_size: synth.test_size,
            num_layers: model.num_layers,
            d_model: model.d_model,
            num_heads: model.num_heads,
            ffn_dim: model.ffn_dim,
            branch_layers: model.branch_layers,
            d_ee: model.d_ee,
            branch_heads: model.branch_heads,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            eps: train.eps,
            epochs_ft1: DESK_EPOCHS_FT1,
            epochs_ft2: DESK_EPOCHS_FT2,
            batch_size: train.batch_size,
            grad_clip: 0.0,
            eval_split: Split::Test.to_string(),
            confidence_thresholds: vec![0.9, 0.95, 0.98, 0.99, 1.0],
            entropy_thresholds: vec![0.02, 0.01, 0.005, 0.002, 0.001],
        }
    }
}

pub const DESK_EPOCHS_FT1: usize = 10;
pub const DESK_EPOCHS_FT2: usize = 20;

impl ExperimentConfig {
    /// Parses a config file's text and applies `overrides` on top.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let config: Self = table.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn from_overrides(overrides: &[String]) -> Result<Self> {
        Self::parse("", overrides)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            alphabet: self.alphabet.clone(),
            lexicon_size: self.lexicon_size,
            word_len: (self.word_len_min, self.word_len_max),
            words_per_utterance: (self.words_min, self.words_max),
            frames_per_char: (self.frames_min, self.frames_max),
            feature_dim: self.feature_dim,
            noise_std: self.noise_std,
            seed: self.seed,
            train_size: self.train_size,
            dev_size: self.dev_size,
            test_size: self.test_size,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            num_layers: self.num_layers,
            d_model: self.d_model,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            feature_dim: self.feature_dim,
            vocab: Vocab::new(&self.synth_spec().vocab_symbols())?,
            branch_layers: self.branch_layers.clone(),
            d_ee: self.d_ee,
            branch_heads: self.branch_heads,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            epochs_ft1: self.epochs_ft1,
            epochs_ft2: self.epochs_ft2,
            batch_size: self.batch_size,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed: self.seed,
        }
    }

    pub fn eval_split(&self) -> Result<Split> {
        self.eval_split.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_spec().validate()?;
        self.model_config()?;
        self.train_config().validate()?;
        self.eval_split()?;
        if self.train_size == 0 || self.dev_size == 0 || self.test_size == 0 {
            return Err(Error::Config("split sizes must be positive".into()));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config("grad_clip must not be negative".into()));
        }
        for t in &self.confidence_thresholds {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(Error::Config(format!("confidence threshold {t} outside (0, 1]")));
            }
        }
        for t in &self.entropy_thresholds {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("entropy threshold {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// A TOML value if `raw` parses as one, otherwise the raw text as a string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
