//! Two-layer graph convolution over the normalized adjacency.
//!
//! `H1 = relu(S H0 W0)` (dropout applied to `H1` while training) and
//! `H2 = S H1 W1` with no activation on the output layer. Row `u` of `H2` is
//! the topology embedding `t_u`.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{glorot_uniform, CsrMatrix, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            input_dim: 64,
            hidden_dim: 64,
            output_dim: 16,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    /// Trainable initial node embeddings, `N × input_dim`.
    pub h0: Tensor,
    pub w0: Tensor,
    pub w1: Tensor,
    pub dropout: f64,
}

/// Tape handles for the GCN parameters.
#[derive(Debug, Clone, Copy)]
pub struct GcnVars {
    pub h0: Var,
    pub w0: Var,
    pub w1: Var,
}

impl GcnModel {
    pub fn init(node_count: usize, config: &GcnConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            h0: glorot_uniform(node_count, config.input_dim, rng),
            w0: glorot_uniform(config.input_dim, config.hidden_dim, rng),
            w1: glorot_uniform(config.hidden_dim, config.output_dim, rng),
            dropout: config.dropout,
        }
    }

    pub fn node_count(&self) -> usize {
        self.h0.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> GcnVars {
        GcnVars {
            h0: tape.leaf(self.h0.clone(), trainable),
            w0: tape.leaf(self.w0.clone(), trainable),
            w1: tape.leaf(self.w1.clone(), trainable),
        }
    }

    /// Forward pass against a dense normalized adjacency; returns `N × d_t`.
    pub fn forward(&self, norm_adj: &Tensor, training: bool, seed: u64) -> Result<Tensor> {
        let adj = Rc::new(CsrMatrix::from_dense(norm_adj)?);
        self.forward_sparse(&adj, training, seed)
    }

    pub fn forward_sparse(&self, adj: &Rc<CsrMatrix>, training: bool, seed: u64) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let out = forward_on_tape(&mut tape, vars, adj, self.dropout, training, seed)?;
        Ok(tape.value(out).clone())
    }

    /// `t_u`, evaluated in inference mode.
    pub fn node_embedding(&self, norm_adj: &Tensor, user: usize) -> Result<Vec<f64>> {
        if user >= self.node_count() {
            return Err(Error::invalid(format!(
                "user {user} out of range for {} nodes",
                self.node_count()
            )));
        }
        Ok(self.forward(norm_adj, false, 0)?.row(user).to_vec())
    }
}

/// Records the two GCN layers on `tape`.
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: GcnVars,
    adj: &Rc<CsrMatrix>,
    dropout: f64,
    training: bool,
    seed: u64,
) -> Result<Var> {
    let n = tape.value(vars.h0).rows();
    if adj.rows() != n || adj.cols() != n {
        return Err(Error::Shape {
            op: "gcn",
            left: vec![adj.rows(), adj.cols()],
            right: tape.value(vars.h0).shape().to_vec(),
        });
    }
    let xw = tape.matmul(vars.h0, vars.w0)?;
    let pre = tape.spmm(Rc::clone(adj), xw)?;
    let h1 = tape.relu(pre)?;
    let h1 = tape.dropout(h1, dropout, training, seed)?;
    let hw = tape.matmul(h1, vars.w1)?;
    tape.spmm(Rc::clone(adj), hw)
}
