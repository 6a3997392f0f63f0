//! Plain forward kernels on [`Tensor`] values. The tape reuses these and adds
//! the matching gradient rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Tensor;
use crate::error::{Error, Result};

/// `c += a · b` with `a: m×k`, `b: k×n`, `c: m×n`, all row-major.
pub fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&aik, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`, `c: m×n`.
pub fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (arow, brow) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (&aki, crow) in arow.iter().zip(c.chunks_exact_mut(n)) {
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aki * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`, `c: m×n`.
pub fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let bt = transpose(b, n, k);
    gemm(a, &bt, c, m, k, n);
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn check_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::dim(op, format!("expected a 2-D tensor, got {s:?}"))),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = check_2d("matmul", a)?;
    let (k2, n) = check_2d("matmul", b)?;
    if k != k2 {
        return Err(Error::dim("matmul", format!("{m}x{k} times {k2}x{n}")));
    }
    let mut out = vec![0.0; m * n];
    gemm(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(&[m, n], out)
}

/// Adds a bias vector to every row.
pub fn add_row(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if bias.numel() != x.cols() {
        return Err(Error::dim(
            "add_row",
            format!("bias of {} for rows of {}", bias.numel(), x.cols()),
        ));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(bias.numel()) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim("add", format!("{:?} + {:?}", a.shape(), b.shape())));
    }
    let mut out = a.clone();
    for (v, w) in out.data_mut().iter_mut().zip(b.data()) {
        *v += w;
    }
    Ok(out)
}

/// Softmax along `axis` with max-subtraction.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::dim("softmax", format!("axis {axis} of {shape:?}")));
    }
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| data[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (data[idx(j)] - max).exp();
                data[idx(j)] = e;
                sum += e;
            }
            for j in 0..len {
                data[idx(j)] /= sum;
            }
        }
    }
    Ok(out)
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Layer normalisation output plus the statistics the backward pass needs.
pub struct LayerNormOut {
    pub y: Tensor,
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_full(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<LayerNormOut> {
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::dim(
            "layer_norm",
            format!("gain {} / bias {} for width {d}", gain.numel(), bias.numel()),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
    }
    let mut xhat = x.clone();
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for (hrow, yrow) in xhat
        .data_mut()
        .chunks_exact_mut(d)
        .zip(y.data_mut().chunks_exact_mut(d))
    {
        let mean = hrow.iter().sum::<f64>() / d as f64;
        let var = hrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std.push(inv);
        for (j, (h, yv)) in hrow.iter_mut().zip(yrow.iter_mut()).enumerate() {
            *h = (*h - mean) * inv;
            *yv = *h * gain.data()[j] + bias.data()[j];
        }
    }
    Ok(LayerNormOut { y, xhat, inv_std })
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_full(x, gain, bias, eps).map(|o| o.y)
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Scaled dot-product attention output plus the per-head weights.
pub struct AttentionOut {
    pub out: Tensor,
    /// `heads × tq × tk`, row-major.
    pub probs: Vec<f64>,
}

/// Multi-head scaled dot-product attention on already projected `q`, `k`, `v`.
///
/// Head `h` uses columns `h*dh..(h+1)*dh` with `dh = D / heads`; scores are
/// scaled by `1/sqrt(dh)`. Keys at positions `>= key_len` are masked out.
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    key_len: Option<usize>,
) -> Result<AttentionOut> {
    let (tq, d) = check_2d("attention", q)?;
    let (tk, dk) = check_2d("attention", k)?;
    if dk != d || v.shape() != k.shape() {
        return Err(Error::dim(
            "attention",
            format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} is not divisible into {heads} heads")));
    }
    let valid = key_len.unwrap_or(tk);
    if valid == 0 || valid > tk {
        return Err(Error::dim("attention", format!("key_len {valid} of {tk}")));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; tq * d];
    let mut probs = vec![0.0; heads * tq * tk];
    let mut qh = vec![0.0; tq * dh];
    let mut kh = vec![0.0; tk * dh];
    let mut vh = vec![0.0; tk * dh];
    let mut oh = vec![0.0; tq * dh];
    for h in 0..heads {
        gather_head(q.data(), &mut qh, d, h * dh, dh);
        gather_head(k.data(), &mut kh, d, h * dh, dh);
        gather_head(v.data(), &mut vh, d, h * dh, dh);
        let p = &mut probs[h * tq * tk..(h + 1) * tq * tk];
        gemm_nt(&qh, &kh, p, tq, dh, tk);
        for row in p.chunks_exact_mut(tk) {
            for s in row.iter_mut() {
                *s *= scale;
            }
            for s in &mut row[valid..] {
                *s = f64::NEG_INFINITY;
            }
            softmax_in_place(row);
        }
        oh.iter_mut().for_each(|x| *x = 0.0);
        gemm(p, &vh, &mut oh, tq, tk, dh);
        scatter_head(&oh, &mut out, d, h * dh, dh);
    }
    Ok(AttentionOut {
        out: Tensor::new(&[tq, d], out)?,
        probs,
    })
}

pub(crate) fn gather_head(src: &[f64], dst: &mut [f64], d: usize, off: usize, dh: usize) {
    for (drow, srow) in dst.chunks_exact_mut(dh).zip(src.chunks_exact(d)) {
        drow.copy_from_slice(&srow[off..off + dh]);
    }
}

pub(crate) fn scatter_head(src: &[f64], dst: &mut [f64], d: usize, off: usize, dh: usize) {
    for (srow, drow) in src.chunks_exact(dh).zip(dst.chunks_exact_mut(d)) {
        drow[off..off + dh].copy_from_slice(srow);
    }
}

/// Multiply-accumulate count of a `m×k · k×n` product.
pub fn matmul_macs(m: usize, k: usize, n: usize) -> u64 {
    (m * k * n) as u64
}

/// Multiply-accumulates in the score and mixing products of attention.
pub fn attention_macs(tq: usize, tk: usize, d: usize) -> u64 {
    2 * (tq * tk * d) as u64
}
