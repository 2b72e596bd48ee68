//! The MLP link scorer, the full model wiring, and the training loop.
//!
//! For a candidate link `u → q` the scorer sees `x_u ++ x_q ++ s_q ++ l_uq`,
//! where `x` is the fused user embedding (word representation followed by the
//! attention-weighted topology embedding). The first MLP layer is stored as
//! three row blocks (`src`, `dst`, `num`) of one weight matrix so per-user
//! projections can be computed once per pass.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{self, AttentionParams};
use crate::error::{Error, Result};
use crate::gcn::{self, GcnConfig, GcnModel, GcnVars};
use crate::graph::{normalized_adjacency_sparse, Edge, EdgeSplit, TemporalGraph};
use crate::metrics::RankedPredictions;
use crate::numeric::{NumericFeatures, SOCIAL_DIM, WEAK_LINK_DIM};
use crate::tensor::{glorot_uniform, sigmoid, Adam, AdamConfig, CsrMatrix, Param, Tape, Tensor, Var};
use crate::text::UserTextProfile;

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Width of the per-pair numeric block `s_q ++ l_uq`.
pub const NUMERIC_DIM: usize = SOCIAL_DIM + WEAK_LINK_DIM;

/// Which feature channels and layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationConfig {
    pub use_long: bool,
    pub use_short: bool,
    pub use_numeric: bool,
    pub use_attention: bool,
}

impl AblationConfig {
    pub const FULL: Self = Self {
        use_long: true,
        use_short: true,
        use_numeric: true,
        use_attention: true,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.use_long && !self.use_short {
            return Err(Error::Config(
                "ablation must keep at least one of long-term or short-term interests".into(),
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match (self.use_long, self.use_short, self.use_numeric, self.use_attention) {
            (true, true, true, true) => "full",
            (false, true, true, true) => "no-long",
            (true, false, true, true) => "no-short",
            (true, true, false, true) => "no-link",
            (true, true, true, false) => "no-attention",
            _ => "custom",
        }
    }

    /// The full model followed by the four single-channel ablations.
    pub fn variants() -> [AblationConfig; 5] {
        ["full", "no-long", "no-short", "no-link", "no-attention"].map(|n| n.parse().expect("known variant"))
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let full = Self::FULL;
        Ok(match s {
            "full" => full,
            "no-long" => Self { use_long: false, ..full },
            "no-short" => Self { use_short: false, ..full },
            "no-link" => Self { use_numeric: false, ..full },
            "no-attention" => Self { use_attention: false, ..full },
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        })
    }
}

/// Node-indexed inputs shared by every training run.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// `N × d_w`; row `u` is `w_u = w_short ++ w_long`.
    pub words: Tensor,
    /// Number of leading columns of `words` holding `w_short`.
    pub short_width: usize,
    pub numeric: NumericFeatures,
    pub adjacency: Rc<CsrMatrix>,
}

impl FeatureSet {
    /// Lays out profiles by graph node index; users without a profile get zeros.
    pub fn new(graph: &TemporalGraph, profiles: &[UserTextProfile], numeric: NumericFeatures) -> Result<Self> {
        let width = profiles.first().map_or(0, UserTextProfile::dim);
        let short_width = profiles.first().map_or(0, |p| p.w_short.len());
        let n = graph.node_count();
        let mut words = vec![0.0; n * width];
        for p in profiles {
            if p.dim() != width || p.w_short.len() != short_width {
                return Err(Error::Data(format!(
                    "profile of user {} has width {} (expected {width})",
                    p.user,
                    p.dim()
                )));
            }
            if let Some(i) = graph.index_of(p.user) {
                words[i * width..(i + 1) * width].copy_from_slice(&p.w_u());
            }
        }
        Ok(Self {
            words: Tensor::matrix(n, width, words)?,
            short_width,
            numeric,
            adjacency: Rc::new(normalized_adjacency_sparse(graph)),
        })
    }

    pub fn node_count(&self) -> usize {
        self.words.rows()
    }

    pub fn word_dim(&self) -> usize {
        self.words.cols()
    }

    /// Word matrix with ablated columns zeroed.
    pub fn masked_words(&self, ablation: &AblationConfig) -> Tensor {
        let mut w = self.words.clone();
        let (cols, short) = (w.cols(), self.short_width);
        for row in w.data_mut().chunks_mut(cols.max(1)) {
            if !ablation.use_short {
                row[..short].iter_mut().for_each(|v| *v = 0.0);
            }
            if !ablation.use_long {
                row[short..].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        w
    }

    /// `P × NUMERIC_DIM` block of `s_q ++ l_uq`, zeroed when numeric
    /// features are ablated.
    pub fn pair_numeric(&self, pairs: &[Edge], ablation: &AblationConfig) -> Result<Tensor> {
        let mut data = Vec::with_capacity(pairs.len() * NUMERIC_DIM);
        for &(u, q) in pairs {
            if ablation.use_numeric {
                data.extend(self.numeric.pair_vector(u, q)?);
            } else {
                data.extend([0.0; NUMERIC_DIM]);
            }
        }
        Tensor::matrix(pairs.len(), NUMERIC_DIM, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// MLP scorer. Input width is `2 * d_x + NUMERIC_DIM`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub src_weight: Tensor,
    pub dst_weight: Tensor,
    pub num_weight: Tensor,
    pub first_bias: Tensor,
    /// Remaining hidden layers and the scalar output layer.
    pub layers: Vec<DenseLayer>,
}

impl PredictorModel {
    pub fn init(user_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let Some((&first, rest)) = hidden.split_first() else {
            return Err(Error::Config("MLP needs at least one hidden layer".into()));
        };
        if hidden.contains(&0) {
            return Err(Error::Config("MLP layer widths must be positive".into()));
        }
        // One Glorot draw for the stacked first-layer weight, then split by rows.
        let input = 2 * user_dim + NUMERIC_DIM;
        let stacked = glorot_uniform(input, first, rng);
        let block = |from: usize, to: usize| {
            Tensor::matrix(to - from, first, stacked.data()[from * first..to * first].to_vec())
        };
        let mut layers = Vec::new();
        let mut width = first;
        for &h in rest.iter().chain(std::iter::once(&1)) {
            layers.push(DenseLayer {
                weight: glorot_uniform(width, h, rng),
                bias: Tensor::zeros(&[h]),
            });
            width = h;
        }
        Ok(Self {
            src_weight: block(0, user_dim)?,
            dst_weight: block(user_dim, 2 * user_dim)?,
            num_weight: block(2 * user_dim, input)?,
            first_bias: Tensor::zeros(&[first]),
            layers,
        })
    }

    pub fn user_dim(&self) -> usize {
        self.src_weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        2 * self.user_dim() + self.num_weight.rows()
    }

    /// Pre-sigmoid output for one concatenated input vector.
    pub fn logit(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "score_link",
                left: vec![input.len()],
                right: vec![self.input_dim()],
            });
        }
        let dx = self.user_dim();
        let mut h = self.first_bias.data().to_vec();
        let blocks = [
            (&self.src_weight, &input[..dx]),
            (&self.dst_weight, &input[dx..2 * dx]),
            (&self.num_weight, &input[2 * dx..]),
        ];
        for (w, x) in blocks {
            for (i, xi) in x.iter().enumerate() {
                for (hj, wij) in h.iter_mut().zip(w.row(i)) {
                    *hj += xi * wij;
                }
            }
        }
        for (k, layer) in self.layers.iter().enumerate() {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
            let mut next = layer.bias.data().to_vec();
            for (i, hi) in h.iter().enumerate() {
                for (nj, wij) in next.iter_mut().zip(layer.weight.row(i)) {
                    *nj += hi * wij;
                }
            }
            h = next;
            debug_assert!(k + 1 < self.layers.len() || h.len() == 1);
        }
        Ok(h[0])
    }

    /// `sigmoid(MLP(x_u ++ x_q ++ s_q ++ l_uq))`.
    pub fn score_link(&self, x_u: &[f64], x_q: &[f64], s_q: &[f64], l_uq: &[f64]) -> Result<f64> {
        if x_u.len() != self.user_dim()
            || x_q.len() != self.user_dim()
            || s_q.len() + l_uq.len() != self.num_weight.rows()
        {
            return Err(Error::Shape {
                op: "score_link",
                left: vec![x_u.len(), x_q.len(), s_q.len(), l_uq.len()],
                right: vec![self.user_dim(), self.user_dim(), self.num_weight.rows()],
            });
        }
        let input: Vec<f64> = [x_u, x_q, s_q, l_uq].concat();
        Ok(sigmoid(self.logit(&input)?))
    }
}

/// GCN encoder, attention parameters, and MLP scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub gcn: GcnModel,
    pub attention: AttentionParams,
    pub mlp: PredictorModel,
    pub ablation: AblationConfig,
}

#[derive(Debug, Clone)]
struct ModelVars {
    gcn: GcnVars,
    beta: Var,
    src: Var,
    dst: Var,
    num: Var,
    first_bias: Var,
    layers: Vec<(Var, Var)>,
}

/// Prepared pair inputs for one forward pass.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub pairs: Vec<Edge>,
    srcs: Vec<usize>,
    dsts: Vec<usize>,
    numeric: Tensor,
}

impl PairBatch {
    pub fn new(features: &FeatureSet, pairs: &[Edge], ablation: &AblationConfig) -> Result<Self> {
        let n = features.node_count();
        if let Some(&(u, q)) = pairs.iter().find(|(u, q)| *u >= n || *q >= n) {
            return Err(Error::invalid(format!("pair ({u},{q}) out of range for {n} nodes")));
        }
        Ok(Self {
            pairs: pairs.to_vec(),
            srcs: pairs.iter().map(|p| p.0).collect(),
            dsts: pairs.iter().map(|p| p.1).collect(),
            numeric: features.pair_numeric(pairs, ablation)?,
        })
    }
}

impl LinkModel {
    pub fn init(node_count: usize, word_dim: usize, gcn_config: &GcnConfig, hidden: &[usize], ablation: AblationConfig, seed: u64) -> Result<Self> {
        ablation.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gcn = GcnModel::init(node_count, gcn_config, &mut rng);
        let attention = AttentionParams::init(word_dim, gcn_config.output_dim, &mut rng);
        let mlp = PredictorModel::init(word_dim + gcn_config.output_dim, hidden, &mut rng)?;
        Ok(Self {
            gcn,
            attention,
            mlp,
            ablation,
        })
    }

    /// Parameters in a fixed order with stable names.
    pub fn params(&self) -> Vec<Param> {
        let mut out = vec![
            Param::new("gcn.h0", self.gcn.h0.clone()),
            Param::new("gcn.w0", self.gcn.w0.clone()),
            Param::new("gcn.w1", self.gcn.w1.clone()),
            Param::new("attention.beta", self.attention.beta.clone()),
            Param::new("mlp.src", self.mlp.src_weight.clone()),
            Param::new("mlp.dst", self.mlp.dst_weight.clone()),
            Param::new("mlp.num", self.mlp.num_weight.clone()),
            Param::new("mlp.b0", self.mlp.first_bias.clone()),
        ];
        for (k, l) in self.mlp.layers.iter().enumerate() {
            out.push(Param::new(format!("mlp.w{}", k + 1), l.weight.clone()));
            out.push(Param::new(format!("mlp.b{}", k + 1), l.bias.clone()));
        }
        out
    }

    /// Inverse of [`LinkModel::params`].
    pub fn from_params(params: &[Param], dropout: f64, ablation: AblationConfig) -> Result<Self> {
        let get = |name: &str| -> Result<Tensor> {
            params
                .iter()
                .find(|p| p.name == name)
                .map(|p| p.value.clone())
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {name}")))
        };
        let mut layers = Vec::new();
        let mut k = 1;
        while params.iter().any(|p| p.name == format!("mlp.w{k}")) {
            layers.push(DenseLayer {
                weight: get(&format!("mlp.w{k}"))?,
                bias: get(&format!("mlp.b{k}"))?,
            });
            k += 1;
        }
        Ok(Self {
            gcn: GcnModel {
                h0: get("gcn.h0")?,
                w0: get("gcn.w0")?,
                w1: get("gcn.w1")?,
                dropout,
            },
            attention: AttentionParams::new(get("attention.beta")?)?,
            mlp: PredictorModel {
                src_weight: get("mlp.src")?,
                dst_weight: get("mlp.dst")?,
                num_weight: get("mlp.num")?,
                first_bias: get("mlp.b0")?,
                layers,
            },
            ablation,
        })
    }

    fn load_params(&mut self, params: &[Param]) {
        let mut it = params.iter().map(|p| p.value.clone());
        let mut next = || it.next().expect("parameter count");
        self.gcn.h0 = next();
        self.gcn.w0 = next();
        self.gcn.w1 = next();
        self.attention.beta = next();
        self.mlp.src_weight = next();
        self.mlp.dst_weight = next();
        self.mlp.num_weight = next();
        self.mlp.first_bias = next();
        for l in &mut self.mlp.layers {
            l.weight = next();
            l.bias = next();
        }
    }

    fn register(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        let gcn = self.gcn.register(tape, trainable);
        let mut leaf = |t: &Tensor| tape.leaf(t.clone(), trainable);
        ModelVars {
            gcn,
            beta: leaf(&self.attention.beta),
            src: leaf(&self.mlp.src_weight),
            dst: leaf(&self.mlp.dst_weight),
            num: leaf(&self.mlp.num_weight),
            first_bias: leaf(&self.mlp.first_bias),
            layers: self
                .mlp
                .layers
                .iter()
                .map(|l| (leaf(&l.weight), leaf(&l.bias)))
                .collect(),
        }
    }

    fn var_list(vars: &ModelVars) -> Vec<Var> {
        let mut v = vec![
            vars.gcn.h0,
            vars.gcn.w0,
            vars.gcn.w1,
            vars.beta,
            vars.src,
            vars.dst,
            vars.num,
            vars.first_bias,
        ];
        for (w, b) in &vars.layers {
            v.push(*w);
            v.push(*b);
        }
        v
    }

    /// Fused user embeddings `x_u` for every node (`N × (d_w + d_t)`).
    fn user_embeddings_on_tape(&self, tape: &mut Tape, vars: &ModelVars, words: Var, features: &FeatureSet, training: bool, seed: u64) -> Result<Var> {
        let topo = gcn::forward_on_tape(tape, vars.gcn, &features.adjacency, self.gcn.dropout, training, seed)?;
        let topo = if self.ablation.use_attention {
            tape.attention(words, topo, vars.beta)?
        } else {
            topo
        };
        tape.concat(&[words, topo], 1)
    }

    fn forward_on_tape(&self, tape: &mut Tape, vars: &ModelVars, features: &FeatureSet, batch: &PairBatch, training: bool, seed: u64) -> Result<Var> {
        let words = tape.constant(features.masked_words(&self.ablation));
        let x = self.user_embeddings_on_tape(tape, vars, words, features, training, seed)?;
        let proj_src = tape.matmul(x, vars.src)?;
        let proj_dst = tape.matmul(x, vars.dst)?;
        let from_src = tape.gather_rows(proj_src, &batch.srcs)?;
        let from_dst = tape.gather_rows(proj_dst, &batch.dsts)?;
        let numeric = tape.constant(batch.numeric.clone());
        let from_num = tape.matmul(numeric, vars.num)?;
        let mut z = tape.add(from_src, from_dst)?;
        z = tape.add(z, from_num)?;
        z = tape.add(z, vars.first_bias)?;
        for (w, b) in &vars.layers {
            let h = tape.relu(z)?;
            let zw = tape.matmul(h, *w)?;
            z = tape.add(zw, *b)?;
        }
        tape.sigmoid(z)
    }

    /// Link probabilities for `pairs` in inference mode.
    pub fn score_pairs(&self, features: &FeatureSet, pairs: &[Edge]) -> Result<Vec<f64>> {
        let batch = PairBatch::new(features, pairs, &self.ablation)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, &vars, features, &batch, false, 0)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Fused embedding `x_u` of every node in inference mode.
    pub fn user_embeddings(&self, features: &FeatureSet) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let words = tape.constant(features.masked_words(&self.ablation));
        let x = self.user_embeddings_on_tape(&mut tape, &vars, words, features, false, 0)?;
        Ok(tape.value(x).clone())
    }

    /// Per-pair scoring through the plain (tape-free) attention and MLP code.
    pub fn score_link_direct(&self, features: &FeatureSet, u: usize, q: usize) -> Result<f64> {
        let topo = self.gcn.forward_sparse(&features.adjacency, false, 0)?;
        let words = features.masked_words(&self.ablation);
        let embed = |i: usize| -> Result<Vec<f64>> {
            let w = words.row(i);
            let t = topo.row(i);
            let t_prime = if self.ablation.use_attention {
                attention::attend(w, t, &self.attention)?
            } else {
                t.to_vec()
            };
            Ok(attention::fuse(w, &t_prime))
        };
        let numeric = features.pair_numeric(&[(u, q)], &self.ablation)?;
        let num = numeric.row(0);
        self.mlp
            .score_link(&embed(u)?, &embed(q)?, &num[..SOCIAL_DIM], &num[SOCIAL_DIM..])
    }

    /// Cross-entropy loss of the batch and the gradient of every parameter
    /// (same order as [`LinkModel::params`]).
    pub fn loss_and_grads(&self, features: &FeatureSet, batch: &PairBatch, labels: &[f64], training: bool, seed: u64) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, true);
        let probs = self.forward_on_tape(&mut tape, &vars, features, batch, training, seed)?;
        let loss = tape.bce(probs, labels, PROB_EPS)?;
        tape.backward(loss)?;
        let value = tape.value(loss).item()?;
        let grads = Self::var_list(&vars)
            .into_iter()
            .map(|v| tape.grad(v).expect("tracked parameter"))
            .collect();
        Ok((value, grads))
    }

    /// Loss only, without recording gradients.
    pub fn loss(&self, features: &FeatureSet, batch: &PairBatch, labels: &[f64], training: bool, seed: u64) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let probs = self.forward_on_tape(&mut tape, &vars, features, batch, training, seed)?;
        Ok(cross_entropy_clamped(tape.value(probs).data(), labels, PROB_EPS))
    }
}

/// `-sum y ln p + (1 - y) ln(1 - p)` with `p` clamped to `[eps, 1 - eps]`.
pub fn cross_entropy_clamped(predictions: &[f64], labels: &[f64], eps: f64) -> f64 {
    predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum()
}

/// Sum-form binary cross-entropy.
pub fn loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(cross_entropy_clamped(predictions, labels, PROB_EPS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gcn: GcnConfig,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            l2_penalty: 5e-4,
            epochs: 200,
            seed: 42,
            gcn: GcnConfig::default(),
            hidden: vec![64, 32],
        }
    }
}

/// Names of the parameter groups reported in [`TrainOutcome::grad_trace`].
pub const PARAM_GROUPS: [&str; 5] = ["gcn.h0", "gcn.w0", "gcn.w1", "attention.beta", "mlp"];

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LinkModel,
    /// Loss before each epoch's update.
    pub loss_trace: Vec<f64>,
    /// Per epoch, max |loss gradient| of each group in [`PARAM_GROUPS`].
    pub grad_trace: Vec<[f64; 5]>,
}

/// Dropout seed of a given epoch.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
}

/// Full-batch training over `train_pos ∪ train_neg`.
pub fn train(features: &FeatureSet, split: &EdgeSplit, ablation: AblationConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    ablation.validate()?;
    if split.train_pos.is_empty() || split.train_neg.is_empty() {
        return Err(Error::Data("training split needs positive and negative pairs".into()));
    }
    let (pairs, labels) = split.train_pairs();
    let batch = PairBatch::new(features, &pairs, &ablation)?;
    let mut model = LinkModel::init(
        features.node_count(),
        features.word_dim(),
        &config.gcn,
        &config.hidden,
        ablation,
        config.seed,
    )?;
    let mut params = model.params();
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        l2_penalty: config.l2_penalty,
        ..AdamConfig::default()
    });
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut grad_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = model.loss_and_grads(features, &batch, &labels, true, epoch_seed(config.seed, epoch))?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
        }
        let mut group = [0.0f64; 5];
        for (p, g) in params.iter().zip(&grads) {
            let slot = PARAM_GROUPS.iter().position(|n| *n == p.name).unwrap_or(4);
            group[slot] = group[slot].max(g.max_abs());
        }
        grad_trace.push(group);
        loss_trace.push(loss);
        for (p, g) in params.iter_mut().zip(grads) {
            p.grad = Some(g);
        }
        // A bypassed attention layer is not optimized at all, so weight
        // decay does not move it either.
        if ablation.use_attention {
            adam.step(&mut params)?;
        } else {
            let beta = params.remove(3);
            adam.step(&mut params)?;
            params.insert(3, Param { grad: None, ..beta });
        }
        model.load_params(&params);
        if epoch % 20 == 0 {
            debug!("epoch {epoch}: loss {loss:.4}");
        }
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        grad_trace,
    })
}

/// Scores candidates, sorts them, and keeps the top `k`. Relevance marks
/// links that are new at `t'`.
pub fn rank_candidates(model: &LinkModel, graph: &TemporalGraph, features: &FeatureSet, candidates: &[Edge], k: usize) -> Result<RankedPredictions> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to rank"));
    }
    if k > candidates.len() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds the {} candidates",
            candidates.len()
        )));
    }
    let scores = model.score_pairs(features, candidates)?;
    let mut ranked = RankedPredictions::from_scores(candidates, &scores, |e| is_new_link(graph, e))?;
    ranked.truncate(k);
    Ok(ranked)
}

pub fn is_new_link(graph: &TemporalGraph, e: &Edge) -> bool {
    graph.edges_t_prime().contains(e) && !graph.edges_t().contains(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::InteractionLog;

    #[test]
    fn loss_examples() {
        assert!((loss(&[0.5], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 1.386294).abs() < 1e-6);
        let perfect = loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!((0.0..=2.0 * PROB_EPS * 3.0).contains(&perfect));
        assert!(loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in AblationConfig::variants() {
            assert_eq!(v.name().parse::<AblationConfig>().unwrap(), v);
        }
        assert!("no-everything".parse::<AblationConfig>().is_err());
    }

    #[test]
    fn both_interest_windows_off_rejected() {
        let bad = AblationConfig {
            use_long: false,
            use_short: false,
            ..AblationConfig::FULL
        };
        assert!(bad.validate().is_err());
        assert!(LinkModel::init(3, 4, &GcnConfig::default(), &[4], bad, 0).is_err());
    }

    #[test]
    fn zero_weights_score_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = PredictorModel::init(3, &[4, 2], &mut rng).unwrap();
        for t in [&mut m.src_weight, &mut m.dst_weight, &mut m.num_weight] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        for l in &mut m.layers {
            l.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let s = m.score_link(&[1.0, 2.0, 3.0], &[0.5; 3], &[1.0; SOCIAL_DIM], &[2.0; WEAK_LINK_DIM]).unwrap();
        assert_eq!(s, 0.5);
        assert!(m.score_link(&[1.0], &[0.5; 3], &[1.0; SOCIAL_DIM], &[2.0; WEAK_LINK_DIM]).is_err());
    }

    #[test]
    fn scores_stay_in_open_unit_interval() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PredictorModel::init(4, &[8, 4], &mut rng).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = sigmoid(m.logit(&x).unwrap());
            assert!(s > 0.0 && s < 1.0);
        }
    }

    fn toy_features() -> (TemporalGraph, FeatureSet) {
        let g = TemporalGraph::from_edges(4, &[(0, 1), (1, 2)], &[(0, 2), (2, 3)]).unwrap();
        let profiles: Vec<UserTextProfile> = (0..4u64)
            .map(|u| UserTextProfile {
                user: u,
                long_words: vec!["x".into()],
                short_words: vec!["y".into()],
                w_long: vec![0.1 * u as f64, -0.2],
                w_short: vec![0.3, 0.05 * u as f64],
            })
            .collect();
        let numeric = NumericFeatures::new(InteractionLog::default(), g.node_ids());
        let f = FeatureSet::new(&g, &profiles, numeric).unwrap();
        (g, f)
    }

    #[test]
    fn masking_zeroes_word_windows() {
        let (_, f) = toy_features();
        let no_long = f.masked_words(&"no-long".parse().unwrap());
        assert!(no_long.data().chunks(4).all(|r| r[2] == 0.0 && r[3] == 0.0));
        let no_short = f.masked_words(&"no-short".parse().unwrap());
        assert!(no_short.data().chunks(4).all(|r| r[0] == 0.0 && r[1] == 0.0));
    }

    #[test]
    fn batched_scores_match_direct_path() {
        let (_, f) = toy_features();
        let gcn = GcnConfig {
            input_dim: 3,
            hidden_dim: 4,
            output_dim: 2,
            dropout: 0.5,
        };
        for variant in AblationConfig::variants() {
            let m = LinkModel::init(4, 4, &gcn, &[5, 3], variant, 9).unwrap();
            let pairs = [(0, 2), (2, 3), (3, 0)];
            let batched = m.score_pairs(&f, &pairs).unwrap();
            for (p, s) in pairs.iter().zip(&batched) {
                let direct = m.score_link_direct(&f, p.0, p.1).unwrap();
                assert!((s - direct).abs() < 1e-12, "{variant}: {s} vs {direct}");
            }
        }
    }

    #[test]
    fn params_roundtrip() {
        let m = LinkModel::init(4, 4, &GcnConfig::default(), &[5, 3], AblationConfig::FULL, 1).unwrap();
        let back = LinkModel::from_params(&m.params(), m.gcn.dropout, m.ablation).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rank_candidates_rules() {
        let (g, f) = toy_features();
        let m = LinkModel::init(4, 4, &GcnConfig::default(), &[4], AblationConfig::FULL, 2).unwrap();
        let cands = [(0, 2), (2, 3), (3, 0), (1, 3)];
        let all = rank_candidates(&m, &g, &f, &cands, 4).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all.relevant_count(), 2);
        assert!(rank_candidates(&m, &g, &f, &[], 1).is_err());
        assert!(rank_candidates(&m, &g, &f, &cands, 5).is_err());
    }
}
