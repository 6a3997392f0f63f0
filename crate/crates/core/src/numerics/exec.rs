//! Execution backends. Network code is written once against [`Exec`] and runs
//! either eagerly ([`Eval`], no gradient bookkeeping) or on a recording
//! [`Tape`](super::Tape).

use std::ops::Deref;

use super::kernels;
use super::{ParamId, ParamStore, Tensor};
use crate::error::Result;

pub trait Exec {
    type Var;

    fn param(&mut self, id: ParamId) -> Self::Var;
    fn constant(&mut self, t: Tensor) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn add_row(&mut self, x: &Self::Var, bias: &Self::Var) -> Result<Self::Var>;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn layer_norm(&mut self, x: &Self::Var, gain: &Self::Var, bias: &Self::Var, eps: f64) -> Result<Self::Var>;
    fn gelu(&mut self, x: &Self::Var) -> Self::Var;
    fn attention(
        &mut self,
        q: &Self::Var,
        k: &Self::Var,
        v: &Self::Var,
        heads: usize,
        key_len: Option<usize>,
    ) -> Result<Self::Var>;
    fn softmax_rows(&mut self, x: &Self::Var) -> Self::Var;
    fn log_softmax_rows(&mut self, x: &Self::Var) -> Self::Var;

    /// Multiply-accumulates performed by matrix products so far.
    fn macs(&self) -> u64;
}

/// Eager value, borrowing parameters instead of copying them.
#[derive(Debug)]
pub enum Val<'m> {
    Borrowed(&'m Tensor),
    Owned(Tensor),
}

impl Deref for Val<'_> {
    type Target = Tensor;

    fn deref(&self) -> &Tensor {
        match self {
            Val::Borrowed(t) => t,
            Val::Owned(t) => t,
        }
    }
}

impl Val<'_> {
    pub fn into_tensor(self) -> Tensor {
        match self {
            Val::Borrowed(t) => t.clone(),
            Val::Owned(t) => t,
        }
    }
}

/// Gradient-free backend that counts multiply-accumulates.
pub struct Eval<'m> {
    store: &'m ParamStore,
    macs: u64,
}

impl<'m> Eval<'m> {
    pub fn new(store: &'m ParamStore) -> Self {
        Self { store, macs: 0 }
    }
}

impl<'m> Exec for Eval<'m> {
    type Var = Val<'m>;

    fn param(&mut self, id: ParamId) -> Val<'m> {
        Val::Borrowed(self.store.get(id))
    }

    fn constant(&mut self, t: Tensor) -> Val<'m> {
        Val::Owned(t)
    }

    fn value<'a>(&'a self, v: &'a Val<'m>) -> &'a Tensor {
        v
    }

    fn matmul(&mut self, a: &Val<'m>, b: &Val<'m>) -> Result<Val<'m>> {
        let out = kernels::matmul(a, b)?;
        self.macs += kernels::matmul_macs(a.rows(), a.cols(), b.cols());
        Ok(Val::Owned(out))
    }

    fn add_row(&mut self, x: &Val<'m>, bias: &Val<'m>) -> Result<Val<'m>> {
        kernels::add_row(x, bias).map(Val::Owned)
    }

    fn add(&mut self, a: &Val<'m>, b: &Val<'m>) -> Result<Val<'m>> {
        kernels::add(a, b).map(Val::Owned)
    }

    fn layer_norm(&mut self, x: &Val<'m>, gain: &Val<'m>, bias: &Val<'m>, eps: f64) -> Result<Val<'m>> {
        kernels::layer_norm(x, gain, bias, eps).map(Val::Owned)
    }

    fn gelu(&mut self, x: &Val<'m>) -> Val<'m> {
        Val::Owned(x.map(kernels::gelu))
    }

    fn attention(
        &mut self,
        q: &Val<'m>,
        k: &Val<'m>,
        v: &Val<'m>,
        heads: usize,
        key_len: Option<usize>,
    ) -> Result<Val<'m>> {
        let out = kernels::attention(q, k, v, heads, key_len)?;
        self.macs += kernels::attention_macs(q.rows(), k.rows(), q.cols());
        Ok(Val::Owned(out.out))
    }

    fn softmax_rows(&mut self, x: &Val<'m>) -> Val<'m> {
        Val::Owned(kernels::softmax_rows(x))
    }

    fn log_softmax_rows(&mut self, x: &Val<'m>) -> Val<'m> {
        Val::Owned(kernels::log_softmax_rows(x))
    }

    fn macs(&self) -> u64 {
        self.macs
    }
}
