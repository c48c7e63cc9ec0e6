//! Slice-level forward and backward kernels plus graph-free tensor ops.
//!
//! Every accumulation runs in a fixed sequential order. The optional row
//! parallelism in the matrix kernels only splits independent output rows, so
//! results do not depend on the thread count.

use rayon::prelude::*;

use crate::{Scalar, Tensor, TensorError, TensorResult};

/// Work (multiply-adds) above which matrix kernels split output rows across threads.
const PAR_THRESHOLD: usize = 1 << 18;

/// `[m×k] · [k×n]`.
pub fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    let row = |(i, out): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// Gradient w.r.t. the left operand: `dc · bᵀ`, shape `[m×k]`.
pub fn matmul_grad_left<T: Scalar>(dc: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut da = vec![T::zero(); m * k];
    let row = |(i, out): (usize, &mut [T])| {
        let dc_row = &dc[i * n..(i + 1) * n];
        for (p, o) in out.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&g, &bv) in dc_row.iter().zip(b_row) {
                s += g * bv;
            }
            *o = s;
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        da.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        da.chunks_mut(k).enumerate().for_each(row);
    }
    da
}

/// Gradient w.r.t. the right operand: `aᵀ · dc`, shape `[k×n]`.
pub fn matmul_grad_right<T: Scalar>(a: &[T], dc: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut db = vec![T::zero(); k * n];
    let row = |(p, out): (usize, &mut [T])| {
        for i in 0..m {
            let a_ip = a[i * k + p];
            if a_ip == T::zero() {
                continue;
            }
            let dc_row = &dc[i * n..(i + 1) * n];
            for (o, &g) in out.iter_mut().zip(dc_row) {
                *o += a_ip * g;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && k > 1 {
        db.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        db.chunks_mut(n).enumerate().for_each(row);
    }
    db
}

/// Splits `shape` around `axis` into `(outer, axis_len, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> TensorResult<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::AxisOutOfRange {
            axis,
            rank: shape.len(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Max-subtracted softmax along the middle axis of an `(outer, len, inner)` view.
pub fn softmax_raw<T: Scalar>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * len + i) * inner + j;
            let mut max = T::neg_infinity();
            for i in 0..len {
                max = max.max(x[at(i)]);
            }
            let mut sum = T::zero();
            for i in 0..len {
                let e = (x[at(i)] - max).exp();
                y[at(i)] = e;
                sum += e;
            }
            for i in 0..len {
                y[at(i)] /= sum;
            }
        }
    }
    y
}

pub fn softmax_backward_raw<T: Scalar>(y: &[T], dy: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * len + i) * inner + j;
            let mut dot = T::zero();
            for i in 0..len {
                dot += y[at(i)] * dy[at(i)];
            }
            for i in 0..len {
                dx[at(i)] = y[at(i)] * (dy[at(i)] - dot);
            }
        }
    }
    dx
}

/// Output of a row-wise layer norm with the statistics needed for backward.
pub struct LayerNormOut<T> {
    pub y: Vec<T>,
    pub mean: Vec<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm_raw<T: Scalar>(x: &[T], d: usize, gain: &[T], bias: &[T], eps: T) -> LayerNormOut<T> {
    let rows = x.len() / d;
    let inv_d = T::one() / T::of(d as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    for (xr, yr) in x.chunks(d).zip(y.chunks_mut(d)) {
        let mut mu = T::zero();
        for &v in xr {
            mu += v;
        }
        mu *= inv_d;
        let mut var = T::zero();
        for &v in xr {
            var += (v - mu) * (v - mu);
        }
        var *= inv_d;
        let r = T::one() / (var + eps).sqrt();
        for (((o, &v), &g), &b) in yr.iter_mut().zip(xr).zip(gain).zip(bias) {
            *o = (v - mu) * r * g + b;
        }
        mean.push(mu);
        rstd.push(r);
    }
    LayerNormOut { y, mean, rstd }
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward_raw<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    mean: &[T],
    rstd: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let inv_d = T::one() / T::of(d as f64);
    let mut dx = vec![T::zero(); x.len()];
    let mut dgain = vec![T::zero(); d];
    let mut dbias = vec![T::zero(); d];
    let mut xhat = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (r, ((xr, dyr), dxr)) in x.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)).enumerate() {
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for c in 0..d {
            xhat[c] = (xr[c] - mean[r]) * rstd[r];
            dxhat[c] = dyr[c] * gain[c];
            dgain[c] += dyr[c] * xhat[c];
            dbias[c] += dyr[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xhat[c];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        for c in 0..d {
            dxr[c] = rstd[r] * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
        }
    }
    (dx, dgain, dbias)
}

/// Geometry of a batched multi-head attention call.
///
/// Queries are `[batches·q_len × d]`, keys and values `[batches·kv_len × d]`.
/// Head `h` uses feature columns `h·d/heads .. (h+1)·d/heads`. A mask, when
/// given, is `[batches × q_len × kv_len]` with `true` meaning "may attend"
/// and is shared across heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionLayout {
    pub batches: usize,
    pub q_len: usize,
    pub kv_len: usize,
    pub heads: usize,
}

impl AttentionLayout {
    pub fn single(q_len: usize, kv_len: usize) -> Self {
        Self {
            batches: 1,
            q_len,
            kv_len,
            heads: 1,
        }
    }

    fn probs_len(&self) -> usize {
        self.batches * self.heads * self.q_len * self.kv_len
    }

    fn prob_index(&self, b: usize, h: usize, i: usize, j: usize) -> usize {
        ((b * self.heads + h) * self.q_len + i) * self.kv_len + j
    }

    pub(crate) fn check(&self, q: &[usize], k: &[usize], v: &[usize], mask: Option<&[bool]>) -> TensorResult<usize> {
        let mismatch = |left: &[usize], right: &[usize]| TensorError::ShapeMismatch {
            op: "attention",
            left: left.to_vec(),
            right: right.to_vec(),
        };
        let (&[qr, qd], &[kr, kd], &[vr, vd]) = (q, k, v) else {
            return Err(mismatch(q, k));
        };
        if qd != kd {
            return Err(mismatch(q, k));
        }
        if vr != kr || vd != qd {
            return Err(mismatch(k, v));
        }
        if self.heads == 0 || qd % self.heads != 0 {
            return Err(mismatch(q, &[self.heads]));
        }
        if qr != self.batches * self.q_len || kr != self.batches * self.kv_len {
            return Err(mismatch(q, &[self.batches, self.q_len, self.kv_len]));
        }
        if let Some(m) = mask {
            let expected = self.batches * self.q_len * self.kv_len;
            if m.len() != expected {
                return Err(TensorError::DataLength { expected, got: m.len() });
            }
        }
        Ok(qd)
    }
}

/// Forward multi-head attention; returns `(output, probabilities)`.
///
/// Masked keys are skipped outright rather than given `-inf` logits, so a
/// query row never reads anything from a masked position.
pub fn attention_raw<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    d: usize,
    layout: &AttentionLayout,
    mask: Option<&[bool]>,
) -> TensorResult<(Vec<T>, Vec<T>)> {
    let AttentionLayout {
        batches,
        q_len,
        kv_len,
        heads,
    } = *layout;
    let dh = d / heads;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut out = vec![T::zero(); batches * q_len * d];
    let mut probs = vec![T::zero(); layout.probs_len()];
    let mut logits = vec![T::zero(); kv_len];
    for b in 0..batches {
        for i in 0..q_len {
            let allowed = |j: usize| mask.is_none_or(|m| m[(b * q_len + i) * kv_len + j]);
            if !(0..kv_len).any(allowed) {
                return Err(TensorError::FullyMaskedRow { batch: b, row: i });
            }
            let q_off = (b * q_len + i) * d;
            for h in 0..heads {
                let qh = &q[q_off + h * dh..q_off + (h + 1) * dh];
                let mut max = T::neg_infinity();
                for (j, logit) in logits.iter_mut().enumerate() {
                    if !allowed(j) {
                        continue;
                    }
                    let k_off = (b * kv_len + j) * d + h * dh;
                    let mut s = T::zero();
                    for (&a, &c) in qh.iter().zip(&k[k_off..k_off + dh]) {
                        s += a * c;
                    }
                    *logit = s * scale;
                    max = max.max(*logit);
                }
                let mut sum = T::zero();
                for (j, &logit) in logits.iter().enumerate() {
                    if allowed(j) {
                        let e = (logit - max).exp();
                        probs[layout.prob_index(b, h, i, j)] = e;
                        sum += e;
                    }
                }
                let o = &mut out[q_off + h * dh..q_off + (h + 1) * dh];
                for j in 0..kv_len {
                    if !allowed(j) {
                        continue;
                    }
                    let p = &mut probs[layout.prob_index(b, h, i, j)];
                    *p /= sum;
                    let v_off = (b * kv_len + j) * d + h * dh;
                    for (oc, &vc) in o.iter_mut().zip(&v[v_off..v_off + dh]) {
                        *oc += *p * vc;
                    }
                }
            }
        }
    }
    Ok((out, probs))
}

/// Returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward_raw<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    d: usize,
    layout: &AttentionLayout,
    mask: Option<&[bool]>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let AttentionLayout {
        batches,
        q_len,
        kv_len,
        heads,
    } = *layout;
    let dh = d / heads;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut dp = vec![T::zero(); kv_len];
    for b in 0..batches {
        for i in 0..q_len {
            let allowed = |j: usize| mask.is_none_or(|m| m[(b * q_len + i) * kv_len + j]);
            let q_off = (b * q_len + i) * d;
            for h in 0..heads {
                let go = &dout[q_off + h * dh..q_off + (h + 1) * dh];
                let mut dot = T::zero();
                for (j, dpj) in dp.iter_mut().enumerate() {
                    if !allowed(j) {
                        continue;
                    }
                    let v_off = (b * kv_len + j) * d + h * dh;
                    let mut s = T::zero();
                    for (&g, &vc) in go.iter().zip(&v[v_off..v_off + dh]) {
                        s += g * vc;
                    }
                    *dpj = s;
                    dot += probs[layout.prob_index(b, h, i, j)] * s;
                }
                for (j, &dpj) in dp.iter().enumerate() {
                    if !allowed(j) {
                        continue;
                    }
                    let p = probs[layout.prob_index(b, h, i, j)];
                    let ds = p * (dpj - dot) * scale;
                    let kv_off = (b * kv_len + j) * d + h * dh;
                    for c in 0..dh {
                        dq[q_off + h * dh + c] += ds * k[kv_off + c];
                        dk[kv_off + c] += ds * q[q_off + h * dh + c];
                        dv[kv_off + c] += p * go[c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Standard matrix product of two rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> TensorResult<Tensor<T>> {
    let (m, k) = a.matrix_dims("matmul")?;
    let (k2, n) = b.matrix_dims("matmul")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], matmul_raw(a.values(), b.values(), m, k, n))
}

/// Numerically stabilized softmax along `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> TensorResult<Tensor<T>> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    Tensor::new(x.shape().to_vec(), softmax_raw(x.values(), outer, len, inner))
}

/// Layer norm over the last axis followed by `gain`/`bias`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: f64) -> TensorResult<Tensor<T>> {
    let d = x.cols();
    for p in [gain, bias] {
        if p.numel() != d {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: x.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
    }
    let out = layer_norm_raw(x.values(), d, gain.values(), bias.values(), T::of(eps));
    Tensor::new(x.shape().to_vec(), out.y)
}

/// Single-head scaled dot-product attention with an optional `[Lq×Lk]` mask.
pub fn scaled_dot_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: Option<&[bool]>,
) -> TensorResult<Tensor<T>> {
    let (lq, _) = q.matrix_dims("attention")?;
    let (lk, _) = k.matrix_dims("attention")?;
    let layout = AttentionLayout::single(lq, lk);
    let d = layout.check(q.shape(), k.shape(), v.shape(), mask)?;
    let (out, _) = attention_raw(q.values(), k.values(), v.values(), d, &layout, mask)?;
    Tensor::new(vec![lq, d], out)
}
