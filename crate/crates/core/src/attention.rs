//! Word/topology attention.
//!
//! For a user with word representation `w` (length `d_w`) and node embedding
//! `t` (length `d_t`), each pair of coordinates gets a coefficient
//! `e_ij = relu(w_i * beta_ij * t_j)`. Coefficients are normalized over the
//! word index `i` for each topology coordinate `j`, and the weighted node
//! embedding is `t'_j = t_j * sum_i alpha_ij * w_i`. The final user
//! embedding is `w` followed by `t'`.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{glorot_uniform, Tensor};

/// The learnable `d_w × d_t` coefficient matrix, shared by all users.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub beta: Tensor,
}

impl AttentionParams {
    pub fn new(beta: Tensor) -> Result<Self> {
        if beta.shape().len() != 2 {
            return Err(Error::invalid(format!(
                "attention beta must be a matrix, got shape {:?}",
                beta.shape()
            )));
        }
        Ok(Self { beta })
    }

    /// Glorot-uniform scaled by 0.1.
    pub fn init(word_dim: usize, topo_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut beta = glorot_uniform(word_dim, topo_dim, rng);
        beta.data_mut().iter_mut().for_each(|v| *v *= 0.1);
        Self { beta }
    }

    pub fn word_dim(&self) -> usize {
        self.beta.shape()[0]
    }

    pub fn topo_dim(&self) -> usize {
        self.beta.shape()[1]
    }

    fn check(&self, w: &[f64], t: &[f64]) -> Result<()> {
        if w.len() != self.word_dim() || t.len() != self.topo_dim() {
            return Err(Error::Shape {
                op: "attention",
                left: vec![w.len(), t.len()],
                right: self.beta.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// `e_ij = relu(w_i * beta_ij * t_j)`.
pub fn attention_coefficients(w: &[f64], t: &[f64], params: &AttentionParams) -> Result<Tensor> {
    params.check(w, t)?;
    let dt = t.len();
    let data = params
        .beta
        .data()
        .iter()
        .enumerate()
        .map(|(k, b)| (w[k / dt] * b * t[k % dt]).max(0.0))
        .collect();
    Tensor::matrix(w.len(), dt, data)
}

/// Column-wise softmax: each column `j` of the result sums to one over `i`.
pub fn attention_weights(e: &Tensor) -> Result<Tensor> {
    let (rows, cols) = (e.rows(), e.cols());
    if e.shape().len() != 2 {
        return Err(Error::invalid(format!(
            "attention weights need a matrix, got {:?}",
            e.shape()
        )));
    }
    let mut out = vec![0.0; rows * cols];
    for j in 0..cols {
        let max = (0..rows).map(|i| e.at(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..rows {
            let x = (e.at(i, j) - max).exp();
            out[i * cols + j] = x;
            total += x;
        }
        for i in 0..rows {
            out[i * cols + j] /= total;
        }
    }
    Tensor::matrix(rows, cols, out)
}

/// `t'_j = t_j * sum_i alpha_ij * w_i`.
pub fn weighted_node_embedding(alpha: &Tensor, w: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if alpha.shape() != [w.len(), t.len()] {
        return Err(Error::Shape {
            op: "weighted_node_embedding",
            left: alpha.shape().to_vec(),
            right: vec![w.len(), t.len()],
        });
    }
    Ok(t.iter()
        .enumerate()
        .map(|(j, tj)| tj * (0..w.len()).map(|i| alpha.at(i, j) * w[i]).sum::<f64>())
        .collect())
}

/// `x_u = w_u ++ t'_u`.
pub fn fuse(w: &[f64], t_prime: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(w.len() + t_prime.len());
    x.extend_from_slice(w);
    x.extend_from_slice(t_prime);
    x
}

/// Full attention layer for one user: the weighted node embedding `t'`.
///
/// The softmax is evaluated in unnormalized form,
/// `t'_j = t_j * (sum_i exp_ij w_i) / (sum_i exp_ij)`, which is the same
/// quantity as [`weighted_node_embedding`] of [`attention_weights`]. With
/// `beta == 0` every `exp_ij` is exactly one, so the result is exactly
/// `t_j * mean(w)`.
pub fn attend(w: &[f64], t: &[f64], params: &AttentionParams) -> Result<Vec<f64>> {
    params.check(w, t)?;
    let mut out = vec![0.0; t.len()];
    let mut terms = Terms::new(w.len(), t.len());
    attend_into(w, t, params.beta.data(), &mut terms, &mut out);
    Ok(out)
}

/// Unnormalized softmax terms for one user.
///
/// Fills `x[i * d_t + j] = exp(e_ij - max_i e_ij)` and the per-column sums
/// `num_j = sum_i x_ij w_i`, `den_j = sum_i x_ij`. Coefficients clipped by
/// the relu all share `exp(-max_j)`, so `exp` runs only on positive ones.
struct Terms {
    x: Vec<f64>,
    max: Vec<f64>,
    base: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Terms {
    fn new(dw: usize, dt: usize) -> Self {
        Self {
            x: vec![0.0; dw * dt],
            max: vec![0.0; dt],
            base: vec![0.0; dt],
            num: vec![0.0; dt],
            den: vec![0.0; dt],
        }
    }

    fn compute(&mut self, w: &[f64], t: &[f64], beta: &[f64]) {
        let dt = t.len();
        // Every e_ij is >= 0, so 0 is a valid starting maximum.
        self.max.iter_mut().for_each(|m| *m = 0.0);
        for (i, wi) in w.iter().enumerate() {
            let row = &beta[i * dt..(i + 1) * dt];
            for ((m, b), tj) in self.max.iter_mut().zip(row).zip(t) {
                let pre = wi * b * tj;
                if pre > *m {
                    *m = pre;
                }
            }
        }
        for (b, m) in self.base.iter_mut().zip(&self.max) {
            *b = (-m).exp();
        }
        self.num.iter_mut().for_each(|v| *v = 0.0);
        self.den.iter_mut().for_each(|v| *v = 0.0);
        for (i, wi) in w.iter().enumerate() {
            let row = &beta[i * dt..(i + 1) * dt];
            let xrow = &mut self.x[i * dt..(i + 1) * dt];
            for j in 0..dt {
                let pre = wi * row[j] * t[j];
                let x = if pre > 0.0 { (pre - self.max[j]).exp() } else { self.base[j] };
                xrow[j] = x;
                self.num[j] += x * wi;
                self.den[j] += x;
            }
        }
    }
}

fn attend_into(w: &[f64], t: &[f64], beta: &[f64], terms: &mut Terms, out: &mut [f64]) {
    terms.compute(w, t, beta);
    for (j, tj) in t.iter().enumerate() {
        out[j] = tj * (terms.num[j] / terms.den[j]);
    }
}

/// Batched forward over `n` users: `words` is `n×d_w`, `topo` is `n×d_t`.
pub fn batch_forward(words: &Tensor, topo: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (n, dw, dt) = batch_dims(words, topo, beta)?;
    let mut out = vec![0.0; n * dt];
    let mut terms = Terms::new(dw, dt);
    for u in 0..n {
        attend_into(words.row(u), topo.row(u), beta.data(), &mut terms, &mut out[u * dt..(u + 1) * dt]);
    }
    Tensor::matrix(n, dt, out)
}

/// Softmax terms saved by [`batch_forward_cached`] for the backward pass.
#[derive(Debug)]
pub struct AttentionCache {
    /// `alpha[(u * d_w + i) * d_t + j]`.
    alpha: Vec<f64>,
    /// `s[u * d_t + j] = sum_i alpha_ij w_i`.
    s: Vec<f64>,
}

/// [`batch_forward`] that also keeps the normalized weights.
pub fn batch_forward_cached(words: &Tensor, topo: &Tensor, beta: &Tensor) -> Result<(Tensor, AttentionCache)> {
    let (n, dw, dt) = batch_dims(words, topo, beta)?;
    let mut out = vec![0.0; n * dt];
    let mut alpha = Vec::with_capacity(n * dw * dt);
    let mut s = Vec::with_capacity(n * dt);
    let mut terms = Terms::new(dw, dt);
    let mut inv = vec![0.0; dt];
    for u in 0..n {
        let t = topo.row(u);
        terms.compute(words.row(u), t, beta.data());
        for j in 0..dt {
            inv[j] = 1.0 / terms.den[j];
            let sj = terms.num[j] / terms.den[j];
            out[u * dt + j] = t[j] * sj;
            s.push(sj);
        }
        for xrow in terms.x.chunks_exact(dt) {
            alpha.extend(xrow.iter().zip(&inv).map(|(x, r)| x * r));
        }
    }
    Ok((Tensor::matrix(n, dt, out)?, AttentionCache { alpha, s }))
}

pub struct BatchGrads {
    pub words: Tensor,
    pub topo: Tensor,
    pub beta: Tensor,
}

/// Vector-Jacobian product of [`batch_forward`] for upstream gradient `grad`.
pub fn batch_backward(words: &Tensor, topo: &Tensor, beta: &Tensor, grad: &Tensor) -> Result<BatchGrads> {
    let (_, cache) = batch_forward_cached(words, topo, beta)?;
    batch_backward_cached(words, topo, beta, grad, &cache)
}

/// [`batch_backward`] reusing the weights saved by the forward pass.
pub fn batch_backward_cached(words: &Tensor, topo: &Tensor, beta: &Tensor, grad: &Tensor, cache: &AttentionCache) -> Result<BatchGrads> {
    let (n, dw, dt) = batch_dims(words, topo, beta)?;
    if grad.shape() != [n, dt] || cache.alpha.len() != n * dw * dt {
        return Err(Error::Shape {
            op: "attention backward",
            left: grad.shape().to_vec(),
            right: vec![n, dt],
        });
    }
    let b = beta.data();
    let mut dwords = vec![0.0; n * dw];
    let mut dtopo = vec![0.0; n * dt];
    let mut dbeta = vec![0.0; dw * dt];
    let mut gs = vec![0.0; dt];
    for u in 0..n {
        let (w, t, g) = (words.row(u), topo.row(u), grad.row(u));
        let s = &cache.s[u * dt..(u + 1) * dt];
        for j in 0..dt {
            // t'_j = t_j * s_j
            dtopo[u * dt + j] += g[j] * s[j];
            gs[j] = g[j] * t[j];
        }
        let dt_row = &mut dtopo[u * dt..(u + 1) * dt];
        let alpha_u = &cache.alpha[u * dw * dt..(u + 1) * dw * dt];
        for i in 0..dw {
            let wi = w[i];
            let brow = &b[i * dt..(i + 1) * dt];
            let arow = &alpha_u[i * dt..(i + 1) * dt];
            let dbrow = &mut dbeta[i * dt..(i + 1) * dt];
            let mut dwi = 0.0;
            for j in 0..dt {
                let alpha = arow[j];
                dwi += gs[j] * alpha;
                let wbt = wi * brow[j] * t[j];
                if wbt > 0.0 {
                    // softmax over i, through the relu
                    let de = alpha * gs[j] * (wi - s[j]);
                    dwi += de * brow[j] * t[j];
                    dbrow[j] += de * wi * t[j];
                    dt_row[j] += de * wi * brow[j];
                }
            }
            dwords[u * dw + i] += dwi;
        }
    }
    Ok(BatchGrads {
        words: Tensor::matrix(n, dw, dwords)?,
        topo: Tensor::matrix(n, dt, dtopo)?,
        beta: Tensor::matrix(dw, dt, dbeta)?,
    })
}

fn batch_dims(words: &Tensor, topo: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    let ok = words.shape().len() == 2
        && topo.shape().len() == 2
        && beta.shape().len() == 2
        && words.rows() == topo.rows()
        && beta.shape() == [words.cols(), topo.cols()];
    if !ok {
        return Err(Error::Shape {
            op: "attention",
            left: [words.shape(), topo.shape()].concat(),
            right: beta.shape().to_vec(),
        });
    }
    Ok((words.rows(), words.cols(), topo.cols()))
}
