//! Transformer building blocks written against [`Exec`].

use super::exec::{Eval, Exec};
use super::{ParamId, ParamStore, Tensor};
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<V> {
    /// `in × out`
    pub weight: V,
    pub bias: V,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<V> {
    pub gain: V,
    pub bias: V,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MhaParams<V> {
    pub query: Linear<V>,
    pub key: Linear<V>,
    pub value: Linear<V>,
    pub output: Linear<V>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnParams<V> {
    pub up: Linear<V>,
    pub down: Linear<V>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Gelu,
    Identity,
}

/// Maps parameter ids (or tensors) to backend variables.
pub trait Bind {
    type Out<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> Self::Out<E::Var>;
}

impl Bind for Linear<ParamId> {
    type Out<V> = Linear<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> Linear<E::Var> {
        Linear {
            weight: e.param(self.weight),
            bias: e.param(self.bias),
        }
    }
}

impl Bind for Norm<ParamId> {
    type Out<V> = Norm<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> Norm<E::Var> {
        Norm {
            gain: e.param(self.gain),
            bias: e.param(self.bias),
        }
    }
}

impl Bind for MhaParams<ParamId> {
    type Out<V> = MhaParams<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> MhaParams<E::Var> {
        MhaParams {
            query: self.query.bind(e),
            key: self.key.bind(e),
            value: self.value.bind(e),
            output: self.output.bind(e),
        }
    }
}

impl Bind for FfnParams<ParamId> {
    type Out<V> = FfnParams<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> FfnParams<E::Var> {
        FfnParams {
            up: self.up.bind(e),
            down: self.down.bind(e),
        }
    }
}

impl Bind for Linear<Tensor> {
    type Out<V> = Linear<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> Linear<E::Var> {
        Linear {
            weight: e.constant(self.weight.clone()),
            bias: e.constant(self.bias.clone()),
        }
    }
}

impl Bind for MhaParams<Tensor> {
    type Out<V> = MhaParams<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> MhaParams<E::Var> {
        MhaParams {
            query: self.query.bind(e),
            key: self.key.bind(e),
            value: self.value.bind(e),
            output: self.output.bind(e),
        }
    }
}

impl Bind for FfnParams<Tensor> {
    type Out<V> = FfnParams<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> FfnParams<E::Var> {
        FfnParams {
            up: self.up.bind(e),
            down: self.down.bind(e),
        }
    }
}

pub fn linear<E: Exec>(e: &mut E, x: &E::Var, p: &Linear<E::Var>) -> Result<E::Var> {
    let y = e.matmul(x, &p.weight)?;
    e.add_row(&y, &p.bias)
}

pub fn norm<E: Exec>(e: &mut E, x: &E::Var, p: &Norm<E::Var>) -> Result<E::Var> {
    e.layer_norm(x, &p.gain, &p.bias, LAYER_NORM_EPS)
}

/// Project to queries/keys/values, attend per head, concatenate heads and
/// apply the output projection.
pub fn multi_head_attention<E: Exec>(
    e: &mut E,
    x: &E::Var,
    p: &MhaParams<E::Var>,
    heads: usize,
    key_len: Option<usize>,
) -> Result<E::Var> {
    let q = linear(e, x, &p.query)?;
    let k = linear(e, x, &p.key)?;
    let v = linear(e, x, &p.value)?;
    let mixed = e.attention(&q, &k, &v, heads, key_len)?;
    linear(e, &mixed, &p.output)
}

pub fn feed_forward<E: Exec>(e: &mut E, x: &E::Var, p: &FfnParams<E::Var>, act: Activation) -> Result<E::Var> {
    let h = linear(e, x, &p.up)?;
    let h = match act {
        Activation::Gelu => e.gelu(&h),
        Activation::Identity => h,
    };
    linear(e, &h, &p.down)
}

/// Pre-norm residual block: `x + attn(norm(x))` then `+ ffn(norm(.))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<V> {
    pub norm1: Norm<V>,
    pub attn: MhaParams<V>,
    pub norm2: Norm<V>,
    pub ffn: FfnParams<V>,
}

pub fn pre_norm_block<E: Exec>(
    e: &mut E,
    x: &E::Var,
    p: &BlockParams<E::Var>,
    heads: usize,
) -> Result<E::Var> {
    let n = norm(e, x, &p.norm1)?;
    let a = multi_head_attention(e, &n, &p.attn, heads, None)?;
    let h = e.add(x, &a)?;
    let n = norm(e, &h, &p.norm2)?;
    let f = feed_forward(e, &n, &p.ffn, Activation::Gelu)?;
    e.add(&h, &f)
}

/// Eager multi-head attention on plain tensors.
pub fn multi_head_attention_eval(
    x: &Tensor,
    p: &MhaParams<Tensor>,
    heads: usize,
    key_len: Option<usize>,
) -> Result<Tensor> {
    let store = ParamStore::new();
    let mut e = Eval::new(&store);
    let xv = e.constant(x.clone());
    let pv = p.bind(&mut e);
    multi_head_attention(&mut e, &xv, &pv, heads, key_len).map(|v| v.into_tensor())
}

/// Eager feed-forward on plain tensors.
pub fn feed_forward_eval(x: &Tensor, p: &FfnParams<Tensor>, act: Activation) -> Result<Tensor> {
    let store = ParamStore::new();
    let mut e = Eval::new(&store);
    let xv = e.constant(x.clone());
    let pv = p.bind(&mut e);
    feed_forward(&mut e, &xv, &pv, act).map(|v| v.into_tensor())
}

impl Bind for BlockParams<ParamId> {
    type Out<V> = BlockParams<V>;
    fn bind<E: Exec>(&self, e: &mut E) -> BlockParams<E::Var> {
        BlockParams {
            norm1: self.norm1.bind(e),
            attn: self.attn.bind(e),
            norm2: self.norm2.bind(e),
            ffn: self.ffn.bind(e),
        }
    }
}
