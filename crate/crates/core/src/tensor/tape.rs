use std::rc::Rc;

use super::{matmul_a_bt_into, matmul_at_b_into, matrix_dims, CsrMatrix, Tensor};
use crate::attention;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Rc<CsrMatrix>, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Vec<usize>),
    Dropout(Var, Vec<f64>),
    Attention {
        words: Var,
        topo: Var,
        beta: Var,
        cache: Option<attention::AttentionCache>,
    },
    Bce { pred: Var, labels: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    /// Tracked leaf (a trainable parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Untracked leaf (an input).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    ///
    /// Tracked nodes the loss does not depend on get a zero gradient.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        if !self.backward_done || !self.nodes[v.0].requires_grad {
            return None;
        }
        let shape = self.nodes[v.0].value.shape().to_vec();
        Some(match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("grad shape"),
            None => Tensor::zeros(&shape),
        })
    }

    pub fn reset_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_done = false;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// Sparse constant times dense variable.
    pub fn spmm(&mut self, s: Rc<CsrMatrix>, x: Var) -> Result<Var> {
        let value = s.matmul_dense(self.value(x))?;
        let rg = self.rg(x);
        self.push(value, Op::SpMM(s, x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.broadcast_order(a, b, "add")?;
        let value = self.binary(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.broadcast_order(a, b, "mul")?;
        let value = self.binary(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let src = self.value(a);
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|v| v * c).collect(),
        )?;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |v| v.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let src = self.value(a);
        let (outer, len, inner) = axis_split(src.shape(), axis, "softmax")?;
        let mut out = src.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| out[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = (out[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[idx(k)] /= total;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a, axis), rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    left: base.clone(),
                    right: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(value, Op::Concat(parts.to_vec(), axis), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if src.is_empty() {
            return Err(Error::invalid("mean of empty tensor"));
        }
        let value = Tensor::scalar(src.data().iter().sum::<f64>() / src.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Selects rows of a matrix (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let (r, c) = matrix_dims(src, "gather_rows")?;
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(Error::invalid(format!("row {i} out of range for {r} rows")));
            }
            data.extend_from_slice(src.row(i));
        }
        let value = Tensor::matrix(rows.len(), c, data)?;
        let rg = self.rg(a);
        self.push(value, Op::GatherRows(a, rows.to_vec()), rg)
    }

    /// Inverted dropout with a seeded mask; identity when not training.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, seed: u64) -> Result<Var> {
        let n = self.value(a).len();
        let mask = super::dropout_mask(n, p, seed)?;
        if !training {
            return Ok(a);
        }
        let src = self.value(a);
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        )?;
        let rg = self.rg(a);
        self.push(value, Op::Dropout(a, mask), rg)
    }

    /// Batched word/topology attention producing the weighted node embeddings.
    ///
    /// `words` is `n×d_w`, `topo` is `n×d_t`, `beta` is `d_w×d_t`; the
    /// result is `n×d_t`.
    pub fn attention(&mut self, words: Var, topo: Var, beta: Var) -> Result<Var> {
        let rg = self.rg(words) || self.rg(topo) || self.rg(beta);
        let (w, t, b) = (self.value(words), self.value(topo), self.value(beta));
        let (value, cache) = if rg {
            let (v, c) = attention::batch_forward_cached(w, t, b)?;
            (v, Some(c))
        } else {
            (attention::batch_forward(w, t, b)?, None)
        };
        self.push(
            value,
            Op::Attention {
                words,
                topo,
                beta,
                cache,
            },
            rg,
        )
    }

    /// Sum-form binary cross-entropy with predictions clamped to `[eps, 1-eps]`.
    pub fn bce(&mut self, pred: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != labels.len() {
            return Err(Error::Shape {
                op: "bce",
                left: p.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let loss = crate::predictor::cross_entropy_clamped(p.data(), labels, eps);
        let rg = self.rg(pred);
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                pred,
                labels: labels.to_vec(),
                eps,
            },
            rg,
        )
    }

    /// Populates gradients of `loss` with respect to every tracked node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::invalid(
                "backward called twice without resetting gradients",
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) -> Result<()> {
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        let result = self.propagate_op(idx, &op, g);
        self.nodes[idx].op = op;
        result
    }

    fn propagate_op(&mut self, idx: usize, op: &Op, g: &[f64]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = matrix_dims(self.value(*a), "matmul")?;
                let n = self.value(*b).cols();
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    matmul_a_bt_into(g, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(*a, da);
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    matmul_at_b_into(self.value(*a).data(), g, &mut db, m, k, n);
                    self.accumulate(*b, db);
                }
            }
            Op::SpMM(s, x) => {
                let cols = self.value(*x).cols();
                let gt = Tensor::matrix(s.rows(), cols, g.to_vec())?;
                let dx = s.transpose().matmul_dense(&gt)?;
                self.accumulate(*x, dx.into_data());
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    self.accumulate(*a, g.to_vec());
                }
                if self.rg(*b) {
                    let blen = self.value(*b).len();
                    self.accumulate(*b, fold_broadcast(g, blen));
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data().to_vec();
                let bv = self.value(*b).data().to_vec();
                let blen = bv.len();
                if self.rg(*a) {
                    let da = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * bv[i % blen])
                        .collect();
                    self.accumulate(*a, da);
                }
                if self.rg(*b) {
                    let prod: Vec<f64> = g.iter().zip(&av).map(|(gi, ai)| gi * ai).collect();
                    self.accumulate(*b, fold_broadcast(&prod, blen));
                }
            }
            Op::Scale(a, c) => {
                self.accumulate(*a, g.iter().map(|v| v * c).collect());
            }
            Op::Relu(a) => {
                let d = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(x, gi)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accumulate(*a, d);
            }
            Op::Sigmoid(a) => {
                let d = self.nodes[idx]
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(s, gi)| gi * s * (1.0 - s))
                    .collect();
                self.accumulate(*a, d);
            }
            Op::Softmax(a, axis) => {
                let y = self.nodes[idx].value.data();
                let (outer, len, inner) = axis_split(self.nodes[idx].value.shape(), *axis, "softmax")?;
                let mut d = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| y[at(k)] * g[at(k)]).sum();
                        for k in 0..len {
                            d[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(*a, d);
            }
            Op::Concat(parts, axis) => {
                let base = self.value(parts[0]).shape().to_vec();
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[axis + 1..].iter().product();
                let total: usize = parts
                    .iter()
                    .map(|p| self.value(*p).shape()[*axis] * inner)
                    .sum();
                let mut offset = 0;
                for p in parts {
                    let chunk = self.value(*p).shape()[*axis] * inner;
                    if self.rg(*p) {
                        let mut d = Vec::with_capacity(chunk * outer);
                        for o in 0..outer {
                            let start = o * total + offset;
                            d.extend_from_slice(&g[start..start + chunk]);
                        }
                        self.accumulate(*p, d);
                    }
                    offset += chunk;
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(*a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                self.accumulate(*a, vec![g[0] / n as f64; n]);
            }
            Op::GatherRows(a, rows) => {
                let src = self.value(*a);
                let c = src.cols();
                let mut d = vec![0.0; src.len()];
                for (out_row, &i) in rows.iter().enumerate() {
                    for j in 0..c {
                        d[i * c + j] += g[out_row * c + j];
                    }
                }
                self.accumulate(*a, d);
            }
            Op::Dropout(a, mask) => {
                self.accumulate(*a, g.iter().zip(mask).map(|(gi, m)| gi * m).collect());
            }
            Op::Attention {
                words,
                topo,
                beta,
                cache,
            } => {
                let gt = Tensor::new(self.nodes[idx].value.shape().to_vec(), g.to_vec())?;
                let (w, t, b) = (self.value(*words), self.value(*topo), self.value(*beta));
                let grads = match cache {
                    Some(c) => attention::batch_backward_cached(w, t, b, &gt, c)?,
                    None => attention::batch_backward(w, t, b, &gt)?,
                };
                self.accumulate(*words, grads.words.into_data());
                self.accumulate(*topo, grads.topo.into_data());
                self.accumulate(*beta, grads.beta.into_data());
            }
            Op::Bce { pred, labels, eps } => {
                let d = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(p, y)| {
                        if *p < *eps || *p > 1.0 - eps {
                            0.0
                        } else {
                            g[0] * (-y / p + (1.0 - y) / (1.0 - p))
                        }
                    })
                    .collect();
                self.accumulate(*pred, d);
            }
        }
        Ok(())
    }

    fn broadcast_order(&self, a: Var, b: Var, op: &'static str) -> Result<(Var, Var)> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if is_suffix(sb, sa) {
            Ok((a, b))
        } else if is_suffix(sa, sb) {
            Ok((b, a))
        } else {
            Err(Error::Shape {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            })
        }
    }

    fn binary(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let blen = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| f(*x, bv.data()[i % blen]))
            .collect();
        Tensor::new(av.shape().to_vec(), data).expect("broadcast shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let src = self.value(a);
        Tensor::new(src.shape().to_vec(), src.data().iter().map(|v| f(*v)).collect())
            .expect("map shape")
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn fold_broadcast(g: &[f64], blen: usize) -> Vec<f64> {
    if g.len() == blen {
        return g.to_vec();
    }
    let mut d = vec![0.0; blen];
    for chunk in g.chunks_exact(blen) {
        d.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }
    d
}

fn axis_split(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape {
            op,
            left: shape.to_vec(),
            right: vec![axis],
        });
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::SpMM(..) => "spmm",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::Sigmoid(_) => "sigmoid",
        Op::Softmax(..) => "softmax",
        Op::Concat(..) => "concat",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::GatherRows(..) => "gather_rows",
        Op::Dropout(..) => "dropout",
        Op::Attention { .. } => "attention",
        Op::Bce { .. } => "bce",
    }
}
