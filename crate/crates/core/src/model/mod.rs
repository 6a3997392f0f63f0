//! Transformer encoder backbone with a final CTC head and intermediate exit
//! branches.
//!
//! Layout: features → linear frontend + sinusoidal positions → `num_layers`
//! pre-norm transformer layers → linear head → softmax. Each exit branch reads
//! the output of its attach layer and runs
//! adapter-in → pre-norm attention block at width `d_ee` → adapter-out →
//! linear → softmax. Branches share no parameters with the head.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;

use crate::ctc::ProbMatrix;
use crate::error::{Error, Result};
use crate::numerics::kernels::softmax_rows;
use crate::numerics::nn::{self, Bind, BlockParams, FfnParams, Linear, MhaParams, Norm};
use crate::numerics::{Eval, Exec, ParamGroup, ParamId, ParamStore, Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ExitBranch {
    pub attach_layer: usize,
    pub adapter_in: Linear<ParamId>,
    pub block: BlockParams<ParamId>,
    pub adapter_out: Linear<ParamId>,
    pub proj: Linear<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    frontend: Linear<ParamId>,
    layers: Vec<BlockParams<ParamId>>,
    head: Linear<ParamId>,
    branches: Vec<ExitBranch>,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn linear(&mut self, name: &str, group: ParamGroup, fan_in: usize, fan_out: usize) -> Linear<ParamId> {
        Linear {
            weight: self
                .store
                .add_uniform(format!("{name}.weight"), group, &[fan_in, fan_out], fan_in, self.rng),
            bias: self
                .store
                .add_uniform(format!("{name}.bias"), group, &[fan_out], fan_in, self.rng),
        }
    }

    fn norm(&mut self, name: &str, group: ParamGroup, width: usize) -> Norm<ParamId> {
        Norm {
            gain: self
                .store
                .add(format!("{name}.gain"), group, Tensor::full(&[width], 1.0)),
            bias: self
                .store
                .add(format!("{name}.bias"), group, Tensor::zeros(&[width])),
        }
    }

    fn block(&mut self, name: &str, group: ParamGroup, width: usize, hidden: usize) -> BlockParams<ParamId> {
        BlockParams {
            norm1: self.norm(&format!("{name}.norm1"), group, width),
            attn: MhaParams {
                query: self.linear(&format!("{name}.attn.query"), group, width, width),
                key: self.linear(&format!("{name}.attn.key"), group, width, width),
                value: self.linear(&format!("{name}.attn.value"), group, width, width),
                output: self.linear(&format!("{name}.attn.output"), group, width, width),
            },
            norm2: self.norm(&format!("{name}.norm2"), group, width),
            ffn: FfnParams {
                up: self.linear(&format!("{name}.ffn.up"), group, width, hidden),
                down: self.linear(&format!("{name}.ffn.down"), group, hidden, width),
            },
        }
    }
}

/// Sinusoidal position encoding, `T × D`.
pub fn position_encoding(frames: usize, width: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[frames, width]);
    for t in 0..frames {
        let row = pe.row_mut(t);
        for i in (0..width).step_by(2) {
            let angle = t as f64 / 10000f64.powf(i as f64 / width as f64);
            row[i] = angle.sin();
            if i + 1 < width {
                row[i + 1] = angle.cos();
            }
        }
    }
    pe
}

/// Allocates and initialises every parameter from `config.seed`.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let mut b = Builder {
        store: ParamStore::new(),
        rng: &mut rng,
    };
    let d = config.d_model;
    let c = config.classes();
    let frontend = b.linear("frontend", ParamGroup::Frontend, config.feature_dim, d);
    let layers = (1..=config.num_layers)
        .map(|l| b.block(&format!("layer{l}"), ParamGroup::Layer(l), d, config.ffn_dim))
        .collect();
    let head = b.linear("head", ParamGroup::Head, d, c);
    let e = config.d_ee;
    let branches = config
        .branch_layers
        .iter()
        .enumerate()
        .map(|(i, &layer)| {
            let g = ParamGroup::Branch(i);
            let name = format!("branch{i}");
            ExitBranch {
                attach_layer: layer,
                adapter_in: b.linear(&format!("{name}.adapter_in"), g, d, e),
                block: b.block(&format!("{name}.block"), g, e, config.branch_ffn_dim()),
                adapter_out: b.linear(&format!("{name}.adapter_out"), g, e, d),
                proj: b.linear(&format!("{name}.proj"), g, d, c),
            }
        })
        .collect();
    Ok(Model {
        config: config.clone(),
        params: b.store,
        frontend,
        layers,
        head,
        branches,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn branches(&self) -> &[ExitBranch] {
        &self.branches
    }

    pub fn head(&self) -> &Linear<ParamId> {
        &self.head
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    /// Branch attached to `layer`, if any.
    pub fn branch_at(&self, layer: usize) -> Option<usize> {
        self.branches.iter().position(|b| b.attach_layer == layer)
    }

    /// SHA-256 over the frontend, backbone and head parameters.
    pub fn backbone_checksum(&self) -> String {
        self.params.checksum(ParamGroup::is_backbone)
    }

    /// SHA-256 over all exit-branch parameters.
    pub fn branch_checksum(&self) -> String {
        self.params.checksum(|g| !g.is_backbone())
    }

    pub fn checksum(&self) -> String {
        self.params.checksum(|_| true)
    }

    fn check_features(&self, features: &Tensor) -> Result<()> {
        match features.shape() {
            [t, f] if *t >= 1 && *f == self.config.feature_dim => Ok(()),
            s => Err(Error::dim(
                "encoder_forward",
                format!("features {s:?}, expected [T, {}]", self.config.feature_dim),
            )),
        }
    }

    /// Frontend projection plus position encoding.
    pub fn embed<E: Exec>(&self, e: &mut E, features: &Tensor) -> Result<E::Var> {
        self.check_features(features)?;
        let x = e.constant(features.clone());
        let p = self.frontend.bind(e);
        let h = nn::linear(e, &x, &p)?;
        let pe = e.constant(position_encoding(features.rows(), self.config.d_model));
        e.add(&h, &pe)
    }

    /// Backbone layer `layer` (1-based).
    pub fn layer<E: Exec>(&self, e: &mut E, layer: usize, x: &E::Var) -> Result<E::Var> {
        let p = self
            .layers
            .get(layer.wrapping_sub(1))
            .ok_or_else(|| Error::Contract(format!("layer {layer} out of range")))?
            .bind(e);
        nn::pre_norm_block(e, x, &p, self.config.num_heads)
    }

    /// Final head logits.
    pub fn head_logits<E: Exec>(&self, e: &mut E, hidden: &E::Var) -> Result<E::Var> {
        let p = self.head.bind(e);
        nn::linear(e, hidden, &p)
    }

    /// Logits of branch `index` from the hidden state of its attach layer.
    pub fn branch_logits<E: Exec>(&self, e: &mut E, index: usize, hidden: &E::Var) -> Result<E::Var> {
        let b = self
            .branches
            .get(index)
            .ok_or_else(|| Error::Contract(format!("branch {index} out of range")))?;
        let adapter_in = b.adapter_in.bind(e);
        let x = nn::linear(e, hidden, &adapter_in)?;
        let block = b.block.bind(e);
        let x = nn::pre_norm_block(e, &x, &block, self.config.branch_heads)?;
        let adapter_out = b.adapter_out.bind(e);
        let x = nn::linear(e, &x, &adapter_out)?;
        let proj = b.proj.bind(e);
        nn::linear(e, &x, &proj)
    }
}

/// Hidden states of layers `1..=k` and the multiply-accumulates spent.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub states: Vec<Tensor>,
    pub macs: u64,
}

/// Runs the backbone through `up_to_layer` (default: all layers). Layers
/// beyond it are never computed.
pub fn encoder_forward(model: &Model, features: &Tensor, up_to_layer: Option<usize>) -> Result<EncoderStates> {
    let k = up_to_layer.unwrap_or(model.num_layers());
    if k < 1 || k > model.num_layers() {
        return Err(Error::Contract(format!(
            "up_to_layer {k} outside [1, {}]",
            model.num_layers()
        )));
    }
    let mut e = Eval::new(model.params());
    let mut h = model.embed(&mut e, features)?;
    let mut states = Vec::with_capacity(k);
    for layer in 1..=k {
        h = model.layer(&mut e, layer, &h)?;
        states.push((*h).clone());
    }
    Ok(EncoderStates {
        states,
        macs: e.macs(),
    })
}

fn probs_from_logits(logits: &Tensor) -> Result<ProbMatrix> {
    ProbMatrix::new(softmax_rows(logits))
}

/// Final-head posteriors for a final-layer hidden state.
pub fn head_forward(model: &Model, hidden: &Tensor) -> Result<ProbMatrix> {
    let mut e = Eval::new(model.params());
    let h = e.constant(hidden.clone());
    let logits = model.head_logits(&mut e, &h)?;
    probs_from_logits(&logits)
}

/// Posteriors of branch `index` for the hidden state of its attach layer.
pub fn branch_forward(model: &Model, index: usize, hidden: &Tensor) -> Result<ProbMatrix> {
    let mut e = Eval::new(model.params());
    let h = e.constant(hidden.clone());
    let logits = model.branch_logits(&mut e, index, &h)?;
    probs_from_logits(&logits)
}

#[cfg(test)]
mod tests;
