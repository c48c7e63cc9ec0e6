//! Reverse-mode autodiff by operation recording.
//!
//! Nodes are appended in execution order, so every operand of node `i` has an
//! index below `i`. `backward` walks the nodes strictly in reverse.

use std::borrow::Cow;

use rand::Rng;

use crate::kernels::{self, AttentionLayout};
use crate::{Scalar, Tensor, TensorError, TensorResult};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        layout: AttentionLayout,
        mask: Option<Vec<bool>>,
        probs: Vec<T>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MaskScale {
        x: Var,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<T>,
        count: usize,
    },
    Sum(Var),
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation and replays it backwards.
///
/// Leaves may borrow tensors (model parameters) for the lifetime `'a`, so a
/// forward pass never copies weights. Gradients live on the tape, keyed by
/// node, and are read back with [`Tape::grad`].
pub struct Tape<'a, T: Scalar = f32> {
    nodes: Vec<Node<'a, T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Owned leaf; tracked when the tensor has `requires_grad` set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let rg = tensor.requires_grad();
        self.push(Cow::Owned(tensor), Op::Leaf, rg)
    }

    /// Borrowed leaf whose gradient is tracked.
    pub fn param(&mut self, tensor: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(tensor), Op::Leaf, true)
    }

    /// Borrowed leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(tensor), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Copy of a leaf's value with its accumulated gradient attached.
    pub fn leaf_with_grad(&self, v: Var) -> Tensor<T> {
        let mut t = self.nodes[v.0].value.as_ref().clone().with_requires_grad(true);
        if let Some(g) = &self.grads[v.0] {
            t.set_grad(g.clone()).expect("gradient length matches its node");
        }
        t
    }

    /// Sign pattern (`input > 0`) of every ReLU on the tape, in recording order.
    ///
    /// Two evaluations with equal patterns lie on the same smooth piece of the
    /// function, which is what a finite-difference check needs.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.nodes[x.0].value.values().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.shape_of(a).to_vec(),
            right: self.shape_of(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push_op(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(self.mismatch("add", a, b));
        }
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(self.shape_of(a).to_vec(), values)?;
        Ok(self.push_op(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product of equal-shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(self.shape_of(a).to_vec(), values)?;
        Ok(self.push_op(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a bias vector to every row (last axis).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> TensorResult<Var> {
        let d = self.value(x).cols();
        if self.value(bias).numel() != d {
            return Err(self.mismatch("add_bias", x, bias));
        }
        let b = self.value(bias).values();
        let mut values = self.value(x).values().to_vec();
        for row in values.chunks_mut(d) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let out = Tensor::new(self.shape_of(x).to_vec(), values)?;
        Ok(self.push_op(out, Op::AddBias(x, bias), &[x, bias]))
    }

    /// `x · weight + bias` for a `[rows × in]` input and `[in × out]` weight.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> TensorResult<Var> {
        let h = self.matmul(x, weight)?;
        self.add_bias(h, bias)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> TensorResult<Var> {
        let s = T::of(s);
        let values = self.value(x).values().iter().map(|&v| v * s).collect();
        let out = Tensor::new(self.shape_of(x).to_vec(), values)?;
        Ok(self.push_op(out, Op::Scale(x, s), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> TensorResult<Var> {
        let values = self
            .value(x)
            .values()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let out = Tensor::new(self.shape_of(x).to_vec(), values)?;
        Ok(self.push_op(out, Op::Relu(x), &[x]))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> TensorResult<Var> {
        let out = kernels::softmax(self.value(x), axis)?;
        Ok(self.push_op(out, Op::Softmax { x, axis }, &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> TensorResult<Var> {
        let d = self.value(x).cols();
        for p in [gain, bias] {
            if self.value(p).numel() != d {
                return Err(self.mismatch("layer_norm", x, p));
            }
        }
        let r = kernels::layer_norm_raw(
            self.value(x).values(),
            d,
            self.value(gain).values(),
            self.value(bias).values(),
            T::of(eps),
        );
        let out = Tensor::new(self.shape_of(x).to_vec(), r.y)?;
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            mean: r.mean,
            rstd: r.rstd,
        };
        Ok(self.push_op(out, op, &[x, gain, bias]))
    }

    /// Batched multi-head scaled dot-product attention; see [`AttentionLayout`].
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        layout: AttentionLayout,
        mask: Option<Vec<bool>>,
    ) -> TensorResult<Var> {
        let d = layout.check(self.shape_of(q), self.shape_of(k), self.shape_of(v), mask.as_deref())?;
        let (out, probs) = kernels::attention_raw(
            self.value(q).values(),
            self.value(k).values(),
            self.value(v).values(),
            d,
            &layout,
            mask.as_deref(),
        )?;
        let out = Tensor::new(vec![layout.batches * layout.q_len, d], out)?;
        let op = Op::Attention {
            q,
            k,
            v,
            layout,
            mask,
            probs,
        };
        Ok(self.push_op(out, op, &[q, k, v]))
    }

    /// Rows of a `[vocab × d]` table selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> TensorResult<Var> {
        let t = self.value(table);
        let (rows, d) = t.matrix_dims("gather")?;
        let mut values = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: id,
                    bound: rows,
                });
            }
            values.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], values)?;
        let op = Op::Gather {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push_op(out, op, &[table]))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// rescales survivors by `1 / (1 - rate)`. A rate of zero is a no-op.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> TensorResult<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(TensorError::Contract(format!("dropout rate {rate} must be below 1")));
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let values = self.value(x).values().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(self.shape_of(x).to_vec(), values)?;
        Ok(self.push_op(out, Op::MaskScale { x, mask }, &[x]))
    }

    /// Mean sparse categorical cross-entropy over the rows of `[n × classes]`
    /// logits. Rows whose target is `None` contribute nothing.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> TensorResult<Var> {
        let t = self.value(logits);
        let (n, classes) = t.matrix_dims("cross_entropy")?;
        if targets.len() != n {
            return Err(TensorError::DataLength {
                expected: n,
                got: targets.len(),
            });
        }
        let probs = kernels::softmax_raw(t.values(), n, classes, 1);
        let mut total = T::zero();
        let mut count = 0usize;
        for (r, target) in targets.iter().enumerate() {
            let Some(c) = *target else { continue };
            if c >= classes {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: c,
                    bound: classes,
                });
            }
            // log-sum-exp form keeps the loss finite when a probability underflows
            let row = t.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for &v in row {
                sum += (v - max).exp();
            }
            total += sum.ln() + max - row[c];
            count += 1;
        }
        if count == 0 {
            return Err(TensorError::NoTargets);
        }
        let out = Tensor::scalar(total / T::of(count as f64));
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
            count,
        };
        Ok(self.push_op(out, op, &[logits]))
    }

    pub fn sum(&mut self, x: Var) -> TensorResult<Var> {
        let mut s = T::zero();
        for &v in self.value(x).values() {
            s += v;
        }
        Ok(self.push_op(Tensor::scalar(s), Op::Sum(x), &[x]))
    }

    /// Populates gradients of `loss` with respect to every tracked node.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grad`];
    /// intermediate gradients are recomputed on each call.
    pub fn backward(&mut self, loss: Var) -> TensorResult<()> {
        let shape = self.shape_of(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss { shape: shape.to_vec() });
        }
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let one = vec![T::one()];
        accumulate(&mut self.grads, loss, &one);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            propagate(&self.nodes, &mut self.grads, node, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, contribution: &[T]) {
    match &mut grads[v.0] {
        Some(buf) => {
            for (b, &c) in buf.iter_mut().zip(contribution) {
                *b += c;
            }
        }
        slot @ None => *slot = Some(contribution.to_vec()),
    }
}

fn propagate<T: Scalar>(nodes: &[Node<'_, T>], grads: &mut [Option<Vec<T>>], node: &Node<'_, T>, g: &[T]) {
    let val = |v: Var| nodes[v.0].value.as_ref();
    let wants = |v: Var| nodes[v.0].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
            let n = val(*b).shape()[1];
            if wants(*a) {
                let da = kernels::matmul_grad_left(g, val(*b).values(), m, k, n);
                accumulate(grads, *a, &da);
            }
            if wants(*b) {
                let db = kernels::matmul_grad_right(val(*a).values(), g, m, k, n);
                accumulate(grads, *b, &db);
            }
        }
        Op::Add(a, b) => {
            for x in [a, b] {
                if wants(*x) {
                    accumulate(grads, *x, g);
                }
            }
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                let da: Vec<T> = g.iter().zip(val(*b).values()).map(|(&g, &y)| g * y).collect();
                accumulate(grads, *a, &da);
            }
            if wants(*b) {
                let db: Vec<T> = g.iter().zip(val(*a).values()).map(|(&g, &x)| g * x).collect();
                accumulate(grads, *b, &db);
            }
        }
        Op::AddBias(x, bias) => {
            if wants(*x) {
                accumulate(grads, *x, g);
            }
            if wants(*bias) {
                let d = val(*bias).numel();
                let mut db = vec![T::zero(); d];
                for row in g.chunks(d) {
                    for (o, &r) in db.iter_mut().zip(row) {
                        *o += r;
                    }
                }
                accumulate(grads, *bias, &db);
            }
        }
        Op::Scale(x, s) => {
            let dx: Vec<T> = g.iter().map(|&v| v * *s).collect();
            accumulate(grads, *x, &dx);
        }
        Op::Relu(x) => {
            let dx: Vec<T> = g
                .iter()
                .zip(val(*x).values())
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect();
            accumulate(grads, *x, &dx);
        }
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = kernels::axis_split(node.value.shape(), *axis).expect("checked in forward");
            let dx = kernels::softmax_backward_raw(node.value.values(), g, outer, len, inner);
            accumulate(grads, *x, &dx);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            mean,
            rstd,
        } => {
            let d = val(*x).cols();
            let (dx, dgain, dbias) =
                kernels::layer_norm_backward_raw(val(*x).values(), d, val(*gain).values(), mean, rstd, g);
            if wants(*x) {
                accumulate(grads, *x, &dx);
            }
            if wants(*gain) {
                accumulate(grads, *gain, &dgain);
            }
            if wants(*bias) {
                accumulate(grads, *bias, &dbias);
            }
        }
        Op::Attention {
            q,
            k,
            v,
            layout,
            mask,
            probs,
        } => {
            let d = val(*q).cols();
            let (dq, dk, dv) = kernels::attention_backward_raw(
                val(*q).values(),
                val(*k).values(),
                val(*v).values(),
                probs,
                g,
                d,
                layout,
                mask.as_deref(),
            );
            for (x, dx) in [(q, dq), (k, dk), (v, dv)] {
                if wants(*x) {
                    accumulate(grads, *x, &dx);
                }
            }
        }
        Op::Gather { table, ids } => {
            let t = val(*table);
            let d = t.cols();
            let mut dt = vec![T::zero(); t.numel()];
            for (row, &id) in g.chunks(d).zip(ids) {
                for (o, &r) in dt[id * d..(id + 1) * d].iter_mut().zip(row) {
                    *o += r;
                }
            }
            accumulate(grads, *table, &dt);
        }
        Op::MaskScale { x, mask } => {
            let dx: Vec<T> = g.iter().zip(mask).map(|(&g, &m)| g * m).collect();
            accumulate(grads, *x, &dx);
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
            count,
        } => {
            let classes = val(*logits).cols();
            let scale = g[0] / T::of(*count as f64);
            let mut dl = vec![T::zero(); probs.len()];
            for (r, target) in targets.iter().enumerate() {
                let Some(c) = *target else { continue };
                let row = &mut dl[r * classes..(r + 1) * classes];
                for (o, &p) in row.iter_mut().zip(&probs[r * classes..(r + 1) * classes]) {
                    *o = p * scale;
                }
                row[c] -= scale;
            }
            accumulate(grads, *logits, &dl);
        }
        Op::Sum(x) => {
            let dx = vec![g[0]; val(*x).numel()];
            accumulate(grads, *x, &dx);
        }
    }
}
