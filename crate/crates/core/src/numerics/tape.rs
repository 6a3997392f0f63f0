//! Reverse-mode differentiation over an explicit operation tape.
//!
//! Every forward op appends a node holding its value and the inputs it needs;
//! [`Tape::backward`] walks the nodes in reverse and applies the registered
//! gradient rule of each op. Nodes that do not depend on a trainable leaf are
//! skipped entirely, which is what makes frozen-backbone training cheap.

use std::collections::HashMap;

use super::exec::Exec;
use super::kernels::{self, gather_head, gemm, gemm_nt, gemm_tn, scatter_head};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    /// Scalar computed outside the tape with a known gradient w.r.t. `x`.
    ScalarWithGrad { x: Var, grad: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'m> {
    store: &'m ParamStore,
    trainable: Box<dyn Fn(ParamId) -> bool + 'm>,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    macs: u64,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    /// Gradients of every trainable parameter touched by the forward pass,
    /// ordered by parameter id.
    pub fn params(&self) -> Vec<(ParamId, &[f64])> {
        self.params
            .iter()
            .filter_map(|&(id, v)| self.of(v).map(|g| (id, g)))
            .collect()
    }
}

impl<'m> Tape<'m> {
    /// Tape where every parameter of `store` is trainable.
    pub fn new(store: &'m ParamStore) -> Self {
        Self::with_trainable(store, |_| true)
    }

    pub fn with_trainable(store: &'m ParamStore, trainable: impl Fn(ParamId) -> bool + 'm) -> Self {
        Self {
            store,
            trainable: Box::new(trainable),
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            macs: 0,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input that is not a stored parameter.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.shape() != y.shape() {
            return Err(Error::dim("mul", format!("{:?} * {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape(), data)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.nodes[x.0].value.map(|v| v * factor);
        self.push(t, Op::Scale(x, factor), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.nodes[x.0].value.sum());
        self.push(t, Op::Sum(x), &[x])
    }

    /// Records a scalar `value` whose gradient with respect to `x` is `grad`.
    pub fn scalar_with_grad(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        if grad.len() != self.nodes[x.0].value.numel() {
            return Err(Error::dim(
                "scalar_with_grad",
                format!("{} gradient values for {} inputs", grad.len(), self.nodes[x.0].value.numel()),
            ));
        }
        Ok(self.push(Tensor::scalar(value), Op::ScalarWithGrad { x, grad }, &[x]))
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.apply_rule(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<(ParamId, Var)> = self.param_nodes.iter().map(|(&k, &v)| (k, v)).collect();
        params.sort_by_key(|p| p.0);
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn apply_rule(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if self.wants(v) {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
                f(slot);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                acc(*a, &|da| gemm_nt(g, val(*b).data(), da, m, n, k));
                acc(*b, &|db| gemm_tn(val(*a).data(), g, db, m, k, n));
            }
            Op::AddRow(x, b) => {
                acc(*x, &|dx| add_into(dx, g));
                acc(*b, &|db| {
                    for row in g.chunks_exact(db.len()) {
                        add_into(db, row);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|da| add_into(da, g));
                acc(*b, &|db| add_into(db, g));
            }
            Op::Mul(a, b) => {
                acc(*a, &|da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(val(*b).data()) {
                        *d += gv * bv;
                    }
                });
                acc(*b, &|db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(val(*a).data()) {
                        *d += gv * av;
                    }
                });
            }
            Op::Scale(x, f) => acc(*x, &|dx| {
                for (d, gv) in dx.iter_mut().zip(g) {
                    *d += gv * f;
                }
            }),
            Op::Sum(x) => acc(*x, &|dx| {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::ScalarWithGrad { x, grad } => acc(*x, &|dx| {
                for (d, gv) in dx.iter_mut().zip(grad) {
                    *d += g[0] * gv;
                }
            }),
            Op::Gelu(x) => acc(*x, &|dx| {
                for ((d, gv), xv) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                    *d += gv * kernels::gelu_grad(*xv);
                }
            }),
            Op::Softmax(x) => acc(*x, &|dx| {
                let c = node.value.cols();
                for ((drow, grow), srow) in dx
                    .chunks_exact_mut(c)
                    .zip(g.chunks_exact(c))
                    .zip(node.value.data().chunks_exact(c))
                {
                    let dot: f64 = grow.iter().zip(srow).map(|(a, b)| a * b).sum();
                    for ((d, gv), s) in drow.iter_mut().zip(grow).zip(srow) {
                        *d += s * (gv - dot);
                    }
                }
            }),
            Op::LogSoftmax(x) => acc(*x, &|dx| {
                let c = node.value.cols();
                for ((drow, grow), lrow) in dx
                    .chunks_exact_mut(c)
                    .zip(g.chunks_exact(c))
                    .zip(node.value.data().chunks_exact(c))
                {
                    let total: f64 = grow.iter().sum();
                    for ((d, gv), l) in drow.iter_mut().zip(grow).zip(lrow) {
                        *d += gv - l.exp() * total;
                    }
                }
            }),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = xhat.cols();
                let gv = val(*gain).data();
                acc(*x, &|dx| {
                    for (((drow, grow), hrow), inv) in dx
                        .chunks_exact_mut(d)
                        .zip(g.chunks_exact(d))
                        .zip(xhat.data().chunks_exact(d))
                        .zip(inv_std)
                    {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hrow[j];
                        }
                        let n = d as f64;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            drow[j] += inv / n * (n * dh - sum_dh - hrow[j] * sum_dh_h);
                        }
                    }
                });
                acc(*gain, &|dg| {
                    for (grow, hrow) in g.chunks_exact(d).zip(xhat.data().chunks_exact(d)) {
                        for ((dv, gv), h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *dv += gv * h;
                        }
                    }
                });
                acc(*bias, &|db| {
                    for grow in g.chunks_exact(d) {
                        add_into(db, grow);
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (tq, d) = (val(*q).rows(), val(*q).cols());
                let tk = val(*k).rows();
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = vec![0.0; tq * d];
                let mut dk = vec![0.0; tk * d];
                let mut dv = vec![0.0; tk * d];
                let mut qh = vec![0.0; tq * dh];
                let mut kh = vec![0.0; tk * dh];
                let mut vh = vec![0.0; tk * dh];
                let mut goh = vec![0.0; tq * dh];
                for h in 0..*heads {
                    gather_head(val(*q).data(), &mut qh, d, h * dh, dh);
                    gather_head(val(*k).data(), &mut kh, d, h * dh, dh);
                    gather_head(val(*v).data(), &mut vh, d, h * dh, dh);
                    gather_head(g, &mut goh, d, h * dh, dh);
                    let p = &probs[h * tq * tk..(h + 1) * tq * tk];

                    let mut dvh = vec![0.0; tk * dh];
                    gemm_tn(p, &goh, &mut dvh, tq, tk, dh);

                    let mut ds = vec![0.0; tq * tk];
                    gemm_nt(&goh, &vh, &mut ds, tq, dh, tk);
                    for (srow, prow) in ds.chunks_exact_mut(tk).zip(p.chunks_exact(tk)) {
                        let dot: f64 = srow.iter().zip(prow).map(|(a, b)| a * b).sum();
                        for (s, pv) in srow.iter_mut().zip(prow) {
                            *s = pv * (*s - dot) * scale;
                        }
                    }
                    let mut dqh = vec![0.0; tq * dh];
                    gemm(&ds, &kh, &mut dqh, tq, tk, dh);
                    let mut dkh = vec![0.0; tk * dh];
                    gemm_tn(&ds, &qh, &mut dkh, tq, tk, dh);

                    scatter_head(&dqh, &mut dq, d, h * dh, dh);
                    scatter_head(&dkh, &mut dk, d, h * dh, dh);
                    scatter_head(&dvh, &mut dv, d, h * dh, dh);
                }
                acc(*q, &|t| add_into(t, &dq));
                acc(*k, &|t| add_into(t, &dk));
                acc(*v, &|t| add_into(t, &dv));
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Exec for Tape<'_> {
    type Var = Var;

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let requires_grad = (self.trainable)(id);
        self.nodes.push(Node {
            value: self.store.get(id).clone(),
            op: Op::Leaf,
            requires_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        &self.nodes[v.0].value
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let t = kernels::matmul(x, y)?;
        self.macs += kernels::matmul_macs(x.rows(), x.cols(), y.cols());
        Ok(self.push(t, Op::MatMul(*a, *b), &[*a, *b]))
    }

    fn add_row(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        let t = kernels::add_row(&self.nodes[x.0].value, &self.nodes[bias.0].value)?;
        Ok(self.push(t, Op::AddRow(*x, *bias), &[*x, *bias]))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::add(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(t, Op::Add(*a, *b), &[*a, *b]))
    }

    fn layer_norm(&mut self, x: &Var, gain: &Var, bias: &Var, eps: f64) -> Result<Var> {
        let out = kernels::layer_norm_full(
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
            eps,
        )?;
        let op = Op::LayerNorm {
            x: *x,
            gain: *gain,
            bias: *bias,
            xhat: out.xhat,
            inv_std: out.inv_std,
        };
        Ok(self.push(out.y, op, &[*x, *gain, *bias]))
    }

    fn gelu(&mut self, x: &Var) -> Var {
        let t = self.nodes[x.0].value.map(kernels::gelu);
        self.push(t, Op::Gelu(*x), &[*x])
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, heads: usize, key_len: Option<usize>) -> Result<Var> {
        let (qt, kt, vt) = (&self.nodes[q.0].value, &self.nodes[k.0].value, &self.nodes[v.0].value);
        let out = kernels::attention(qt, kt, vt, heads, key_len)?;
        self.macs += kernels::attention_macs(qt.rows(), kt.rows(), qt.cols());
        let op = Op::Attention {
            q: *q,
            k: *k,
            v: *v,
            heads,
            probs: out.probs,
        };
        Ok(self.push(out.out, op, &[*q, *k, *v]))
    }

    fn softmax_rows(&mut self, x: &Var) -> Var {
        let t = kernels::softmax_rows(&self.nodes[x.0].value);
        self.push(t, Op::Softmax(*x), &[*x])
    }

    fn log_softmax_rows(&mut self, x: &Var) -> Var {
        let t = kernels::log_softmax_rows(&self.nodes[x.0].value);
        self.push(t, Op::LogSoftmax(*x), &[*x])
    }

    fn macs(&self) -> u64 {
        self.macs
    }
}
