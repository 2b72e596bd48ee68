//! Independent oracles and the acceptance checks built on them.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkpred::attention::{self, AttentionParams};
use linkpred::baselines::{common_neighbors, pagerank, PageRankConfig};
use linkpred::config::{Baseline, ExperimentConfig};
use linkpred::experiment::{load_dataset, run_experiment, RunPlan};
use linkpred::gcn::{GcnConfig, GcnModel};
use linkpred::graph::{normalized_adjacency_sparse, split_new_links, Edge, TemporalGraph};
use linkpred::metrics::{auc_exact, auc_from_counts, auc_sampled, ks_statistic, map_at_k, ndcg_at_k, RankedPredictions, ScoredEvaluation};
use linkpred::numeric::{Interaction, InteractionKind, InteractionLog, NumericFeatures};
use linkpred::predictor::{train, AblationConfig, FeatureSet, LinkModel, PairBatch, TrainConfig, PARAM_GROUPS};
use linkpred::tensor::{CsrMatrix, Param, Tape, Tensor, Var};
use linkpred::text::{assemble_profile, WordEmbeddingTable};

pub type Check = Result<String, String>;

pub fn tiny_config_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny.conf")
}

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_file(&tiny_config_path()).expect("tiny config")
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- dense linear algebra

pub fn dense_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, rest) = a.split_at_mut(row);
            for (x, p) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

// ---------------------------------------------------------------- graph oracles

/// `D^-1/2 (A + I) D^-1/2` of the symmetrized edge list, row-major.
pub fn dense_normalized_adjacency(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for &(u, v) in edges {
        a[u * n + v] = 1.0;
        a[v * n + u] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

/// Two-layer GCN composed densely: `S relu(S H0 W0) W1`.
pub fn dense_gcn(n: usize, edges: &[Edge], model: &GcnModel) -> Vec<f64> {
    let s = dense_normalized_adjacency(n, edges);
    let (d0, d1, d2) = (model.w0.rows(), model.w0.cols(), model.w1.cols());
    let xw = dense_matmul(model.h0.data(), model.w0.data(), n, d0, d1);
    let h1: Vec<f64> = dense_matmul(&s, &xw, n, n, d1).into_iter().map(|v| v.max(0.0)).collect();
    let hw = dense_matmul(&h1, model.w1.data(), n, d1, d2);
    dense_matmul(&s, &hw, n, n, d2)
}

/// PageRank as the solution of `(I - d M) x = (1 - d)/N`, where column `u`
/// of `M` spreads `u`'s mass over its successors (uniformly over all nodes
/// when `u` is dangling).
pub fn pagerank_linear_solve(n: usize, edges: &[Edge], damping: f64) -> Vec<f64> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        if !out[u].contains(&v) {
            out[u].push(v);
        }
    }
    let mut a = vec![vec![0.0; n]; n];
    for (v, row) in a.iter_mut().enumerate() {
        row[v] = 1.0;
    }
    for (u, succ) in out.iter().enumerate() {
        if succ.is_empty() {
            for row in a.iter_mut() {
                row[u] -= damping / n as f64;
            }
        } else {
            for &v in succ {
                a[v][u] -= damping / succ.len() as f64;
            }
        }
    }
    solve(a, vec![(1.0 - damping) / n as f64; n])
}

/// Canonical code of an undirected graph on at most 8 nodes given as
/// neighbour bitmasks. Colour refinement splits the nodes into invariant
/// cells; the code is the largest upper-triangle bit string over orderings
/// that list cells in colour order.
fn canonical_code(adj: &[u8]) -> (Vec<usize>, u64) {
    let n = adj.len();
    let mut colour: Vec<usize> = adj.iter().map(|m| m.count_ones() as usize).collect();
    loop {
        let sig: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<usize> = (0..n).filter(|&u| adj[v] >> u & 1 == 1).map(|u| colour[u]).collect();
                nb.sort_unstable();
                (colour[v], nb)
            })
            .collect();
        let mut distinct = sig.clone();
        distinct.sort();
        distinct.dedup();
        let next: Vec<usize> = sig.iter().map(|s| distinct.binary_search(s).unwrap()).collect();
        let classes = |c: &[usize]| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c.dedup();
            c.len()
        };
        let done = classes(&next) == classes(&colour);
        colour = next;
        if done {
            break;
        }
    }
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| colour[v]);
    for v in order {
        match cells.last_mut() {
            Some(cell) if colour[cell[0]] == colour[v] => cell.push(v),
            _ => cells.push(vec![v]),
        }
    }
    let shape: Vec<usize> = cells.iter().map(Vec::len).collect();
    let mut best = 0u64;
    let mut perm = Vec::with_capacity(n);
    fn visit(cells: &mut [Vec<usize>], idx: usize, perm: &mut Vec<usize>, adj: &[u8], best: &mut u64) {
        if idx == cells.len() {
            let mut code = 0u64;
            for i in 0..perm.len() {
                for j in i + 1..perm.len() {
                    code = code << 1 | u64::from(adj[perm[i]] >> perm[j] & 1);
                }
            }
            *best = (*best).max(code);
            return;
        }
        let len = cells[idx].len();
        permute(cells, idx, 0, len, perm, adj, best);
    }
    fn permute(cells: &mut [Vec<usize>], idx: usize, k: usize, len: usize, perm: &mut Vec<usize>, adj: &[u8], best: &mut u64) {
        if k == len {
            let base = perm.len();
            perm.extend_from_slice(&cells[idx]);
            visit(cells, idx + 1, perm, adj, best);
            perm.truncate(base);
            return;
        }
        for i in k..len {
            cells[idx].swap(k, i);
            permute(cells, idx, k + 1, len, perm, adj, best);
            cells[idx].swap(k, i);
        }
    }
    visit(&mut cells, 0, &mut perm, adj, &mut best);
    (shape, best)
}

/// One representative of every isomorphism class of undirected graphs on
/// `1..=max_n` nodes, as neighbour bitmasks; entry `n - 1` holds the
/// `n`-node graphs.
pub fn graph_classes(max_n: usize) -> Vec<Vec<Vec<u8>>> {
    assert!((1..=8).contains(&max_n));
    let mut all = vec![vec![vec![0u8]]];
    for n in 2..=max_n {
        let mut seen: HashMap<(Vec<usize>, u64), Vec<u8>> = HashMap::new();
        for g in &all[n - 2] {
            for mask in 0..1u8 << (n - 1) {
                let mut adj = g.clone();
                for (u, m) in adj.iter_mut().enumerate() {
                    if mask >> u & 1 == 1 {
                        *m |= 1 << (n - 1);
                    }
                }
                adj.push(mask);
                seen.entry(canonical_code(&adj)).or_insert(adj);
            }
        }
        let mut reps: Vec<Vec<u8>> = seen.into_values().collect();
        reps.sort();
        all.push(reps);
    }
    all
}

/// Undirected edges of a bitmask graph.
pub fn mask_edges(adj: &[u8]) -> Vec<Edge> {
    let n = adj.len();
    (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| adj[u] >> v & 1 == 1)
        .collect()
}

/// Orients undirected edges at random, sometimes both ways.
pub fn random_orientation(edges: &[Edge], rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let mut out = Vec::new();
    for &(u, v) in edges {
        match rng.gen_range(0..3) {
            0 => out.push((u, v)),
            1 => out.push((v, u)),
            _ => out.extend([(u, v), (v, u)]),
        }
    }
    out
}

// ---------------------------------------------------------------- metric oracles

/// Exact AUC by enumerating every positive/negative pair.
pub fn auc_by_enumeration(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in pos {
        for q in neg {
            total += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() * neg.len()) as f64
}

// ---------------------------------------------------------------- finite differences

pub const FD_STEP: f64 = 1e-5;

/// Elementwise relative error with a floor on the denominator, so that
/// gradients indistinguishable from zero compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `f` with respect to every element of `inputs`.
pub fn numeric_gradients(inputs: &[Tensor], f: &dyn Fn(&[Tensor]) -> f64) -> Vec<Vec<f64>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].len());
        for k in 0..inputs[i].len() {
            let x = inputs[i].data()[k];
            work[i].data_mut()[k] = x + FD_STEP;
            let up = f(&work);
            work[i].data_mut()[k] = x - FD_STEP;
            let down = f(&work);
            work[i].data_mut()[k] = x;
            g.push((up - down) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    out
}

fn max_error(analytic: &[Tensor], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n).map(|(a, n)| relative_error(*a, *n)))
        .fold(0.0, f64::max)
}

/// Checks one tape op: the op output is contracted with a fixed random
/// tensor so every output element contributes to the scalar.
pub fn tape_op_error(inputs: &[Tensor], seed: u64, op: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let weights = |shape: &[usize]| random_tensor(shape, &mut ChaCha8Rng::seed_from_u64(seed));
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = op(&mut tape, &vars);
        let v = tape.value(out);
        v.data().iter().zip(weights(v.shape()).data()).map(|(a, b)| a * b).sum()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = op(&mut tape, &vars);
    let r = tape.constant(weights(tape.value(out).shape()));
    let prod = tape.mul(out, r).unwrap();
    let loss = tape.sum(prod).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| tape.grad(*v).unwrap()).collect();
    max_error(&analytic, &numeric_gradients(inputs, &eval))
}

/// Values bounded away from zero, so relu kinks sit outside the FD stencil.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_csr(n: usize, m: usize, density: f64, rng: &mut ChaCha8Rng) -> CsrMatrix {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.gen_bool(density) {
                trip.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    CsrMatrix::from_triplets(n, m, trip)
}

/// Six users, a four-word vocabulary, and a handful of interactions.
pub fn toy_problem() -> (TemporalGraph, FeatureSet, Vec<Edge>, Vec<f64>) {
    let graph = TemporalGraph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)], &[(1, 4), (2, 5), (0, 2)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let words: Vec<String> = ["alpha", "beta", "gamma", "delta"].iter().map(|s| s.to_string()).collect();
    let vectors = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let table = WordEmbeddingTable::from_vectors(words.clone(), vectors).unwrap();
    let profiles: Vec<_> = (0..6u64)
        .map(|u| {
            let long = [words[u as usize % 4].clone()];
            let short = [words[(u as usize + 1) % 4].clone()];
            assemble_profile(u, &table, &long, &short).unwrap()
        })
        .collect();
    let kinds = InteractionKind::ALL;
    let records: Vec<Interaction> = (0..14)
        .map(|i| Interaction {
            src: i % 6,
            dst: (i * 5 + 1) % 6,
            kind: kinds[i as usize % kinds.len()],
            quality: i % 4,
            timestamp: 0,
        })
        .filter(|r| r.src != r.dst)
        .collect();
    let numeric = NumericFeatures::new(InteractionLog::new(records, 0), graph.node_ids());
    let features = FeatureSet::new(&graph, &profiles, numeric).unwrap();
    let pairs = vec![(1, 4), (2, 5), (0, 2), (4, 1), (3, 5), (5, 2)];
    let labels = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    (graph, features, pairs, labels)
}

pub fn toy_gcn_config() -> GcnConfig {
    GcnConfig {
        input_dim: 3,
        hidden_dim: 4,
        output_dim: 3,
        dropout: 0.5,
    }
}

/// Max relative error of the fused loss gradient of `ablation` on the toy
/// problem (training mode, so dropout is part of the graph).
pub fn fused_loss_error(ablation: AblationConfig, seed: u64) -> f64 {
    let (_, features, pairs, labels) = toy_problem();
    let mut model = LinkModel::init(6, features.word_dim(), &toy_gcn_config(), &[5, 3], ablation, seed).unwrap();
    // Zero-initialised biases put dead hidden rows exactly on a relu kink,
    // where central differences are meaningless.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.mlp.first_bias = random_tensor(model.mlp.first_bias.shape(), &mut rng);
    for layer in &mut model.mlp.layers {
        layer.bias = random_tensor(layer.bias.shape(), &mut rng);
    }
    let batch = PairBatch::new(&features, &pairs, &ablation).unwrap();
    let (_, analytic) = model.loss_and_grads(&features, &batch, &labels, true, seed).unwrap();
    let params = model.params();
    let values: Vec<Tensor> = params.iter().map(|p| p.value.clone()).collect();
    let eval = |xs: &[Tensor]| -> f64 {
        let ps: Vec<Param> = params.iter().zip(xs).map(|(p, x)| Param::new(p.name.clone(), x.clone())).collect();
        LinkModel::from_params(&ps, model.gcn.dropout, ablation)
            .unwrap()
            .loss(&features, &batch, &labels, true, seed)
            .unwrap()
    };
    max_error(&analytic, &numeric_gradients(&values, &eval))
}

/// Every differentiable tape op plus the fused loss of every variant.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let mut check = |name: &str, inputs: Vec<Tensor>, op: &dyn Fn(&mut Tape, &[Var]) -> Var| {
        out.push((name.to_string(), tape_op_error(&inputs, name.len() as u64, op)));
    };
    let r = &mut rng;
    check("matmul", vec![random_tensor(&[3, 4], r), random_tensor(&[4, 2], r)], &|t, v| t.matmul(v[0], v[1]).unwrap());
    let s = Rc::new(random_csr(5, 4, 0.5, r));
    check("spmm", vec![random_tensor(&[4, 3], r)], &move |t, v| t.spmm(Rc::clone(&s), v[0]).unwrap());
    check("add", vec![random_tensor(&[3, 4], r), random_tensor(&[3, 4], r)], &|t, v| t.add(v[0], v[1]).unwrap());
    check("add-broadcast", vec![random_tensor(&[3, 4], r), random_tensor(&[4], r)], &|t, v| t.add(v[0], v[1]).unwrap());
    check("mul", vec![random_tensor(&[3, 4], r), random_tensor(&[3, 4], r)], &|t, v| t.mul(v[0], v[1]).unwrap());
    check("mul-broadcast", vec![random_tensor(&[4], r), random_tensor(&[2, 4], r)], &|t, v| t.mul(v[0], v[1]).unwrap());
    check("scale", vec![random_tensor(&[2, 3], r)], &|t, v| t.scale(v[0], -1.7).unwrap());
    check("relu", vec![away_from_zero(&[3, 4], r)], &|t, v| t.relu(v[0]).unwrap());
    check("sigmoid", vec![random_tensor(&[3, 4], r)], &|t, v| t.sigmoid(v[0]).unwrap());
    check("softmax-rows", vec![random_tensor(&[3, 4], r)], &|t, v| t.softmax(v[0], 1).unwrap());
    check("softmax-cols", vec![random_tensor(&[3, 4], r)], &|t, v| t.softmax(v[0], 0).unwrap());
    check("concat-cols", vec![random_tensor(&[3, 2], r), random_tensor(&[3, 4], r)], &|t, v| t.concat(&[v[0], v[1]], 1).unwrap());
    check("concat-rows", vec![random_tensor(&[2, 3], r), random_tensor(&[1, 3], r)], &|t, v| t.concat(&[v[0], v[1]], 0).unwrap());
    check("sum", vec![random_tensor(&[3, 4], r)], &|t, v| t.sum(v[0]).unwrap());
    check("mean", vec![random_tensor(&[3, 4], r)], &|t, v| t.mean(v[0]).unwrap());
    check("gather-rows", vec![random_tensor(&[4, 3], r)], &|t, v| t.gather_rows(v[0], &[2, 0, 2, 3]).unwrap());
    check("dropout", vec![random_tensor(&[4, 5], r)], &|t, v| t.dropout(v[0], 0.5, true, 9).unwrap());
    check(
        "attention",
        vec![random_tensor(&[6, 4], r), random_tensor(&[6, 3], r), random_tensor(&[4, 3], r)],
        &|t, v| t.attention(v[0], v[1], v[2]).unwrap(),
    );
    let probs = Tensor::vector((0..6).map(|_| r.gen_range(0.05..0.95)).collect());
    check("bce", vec![probs], &|t, v| t.bce(v[0], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], 1e-12).unwrap());
    check(
        "composite",
        vec![random_tensor(&[5, 4], r), random_tensor(&[4, 6], r), random_tensor(&[6, 3], r), random_tensor(&[3], r)],
        &|t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.sigmoid(h).unwrap();
            let h = t.matmul(h, v[2]).unwrap();
            let h = t.add(h, v[3]).unwrap();
            t.softmax(h, 1).unwrap()
        },
    );
    for (k, variant) in AblationConfig::variants().into_iter().enumerate() {
        out.push((format!("fused-loss-{}", variant.name()), fused_loss_error(variant, 100 + k as u64)));
    }
    out
}

// ---------------------------------------------------------------- criteria

pub fn criterion_1() -> Check {
    let start = Instant::now();
    let results = gradient_suite();
    let elapsed = start.elapsed().as_secs_f64();
    let (worst_name, worst) = results
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    let msg = format!("{} checks, worst relative error {worst:.2e} ({worst_name}), {elapsed:.2} s", results.len());
    let failing: Vec<_> = results.iter().filter(|(_, e)| e.is_nan() || *e >= 1e-4).map(|(n, _)| n.as_str()).collect();
    if failing.is_empty() && elapsed < 10.0 {
        Ok(msg)
    } else {
        Err(format!("{msg}; failing: {failing:?}"))
    }
}

pub const GRAPH_CLASS_COUNTS: [usize; 8] = [1, 2, 4, 11, 34, 156, 1044, 12346];

/// GCN forward against the dense composition on one representative of
/// every graph class up to 8 nodes, 20 parameter draws each. Each draw
/// relabels the nodes and orients the edges at random.
pub fn gcn_oracle_check() -> Check {
    let classes = graph_classes(8);
    let counts: Vec<usize> = classes.iter().map(Vec::len).collect();
    if counts != GRAPH_CLASS_COUNTS {
        return Err(format!("graph enumeration produced {counts:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut graphs = 0;
    for adj in classes.iter().flatten() {
        let n = adj.len();
        let base = mask_edges(adj);
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let relabelled: Vec<Edge> = base.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
            let edges = random_orientation(&relabelled, &mut rng);
            let g = TemporalGraph::from_edges(n, &edges, &[]).map_err(|e| e.to_string())?;
            let cfg = GcnConfig {
                input_dim: rng.gen_range(1..5),
                hidden_dim: rng.gen_range(1..5),
                output_dim: rng.gen_range(1..4),
                dropout: 0.5,
            };
            let model = GcnModel::init(n, &cfg, &mut rng);
            let got = model
                .forward_sparse(&Rc::new(normalized_adjacency_sparse(&g)), false, 0)
                .map_err(|e| e.to_string())?;
            let want = dense_gcn(n, &edges, &model);
            worst = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        graphs += 1;
    }
    if worst < 1e-10 {
        Ok(format!("GCN: {graphs} graph classes x 20 draws, max diff {worst:.1e}"))
    } else {
        Err(format!("GCN max diff {worst:.3e}"))
    }
}

pub fn auc_oracle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst = 0.0f64;
    for set in 0..30u64 {
        let np = rng.gen_range(20..400);
        let nn = rng.gen_range(20..400);
        let shift: f64 = rng.gen_range(-1.0..2.0);
        // Coarse rounding on some sets produces ties.
        let grid = if set % 3 == 0 { 10.0 } else { 1e9 };
        let draw = |rng: &mut ChaCha8Rng, mu: f64| -> f64 { ((rng.gen::<f64>() + mu) * grid).round() / grid };
        let pos: Vec<f64> = (0..np).map(|_| draw(&mut rng, shift)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| draw(&mut rng, 0.0) * 1.5).collect();
        let exact = auc_by_enumeration(&pos, &neg);
        let eval = ScoredEvaluation::new(pos, neg).map_err(|e| e.to_string())?;
        if (auc_exact(&eval) - exact).abs() > 1e-12 {
            return Err(format!("exact AUC of set {set} disagrees with enumeration"));
        }
        let sampled = auc_sampled(&eval, 100_000, set).map_err(|e| e.to_string())?;
        worst = worst.max((sampled - exact).abs());
    }
    if worst <= 0.01 {
        Ok(format!("AUC: 30 sets, max |sampled - exact| {worst:.4}"))
    } else {
        Err(format!("AUC gap {worst:.4}"))
    }
}

/// Common Neighbours on every labelled undirected 7-node graph, with a
/// random orientation of each edge.
pub fn cn_oracle_check() -> Check {
    const N: usize = 7;
    let pairs: Vec<Edge> = (0..N).flat_map(|u| (u + 1..N).map(move |v| (u, v))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let total = 1u32 << pairs.len();
    for code in 0..total {
        let mut nb = [0u8; N];
        let mut undirected = Vec::new();
        for (b, &(u, v)) in pairs.iter().enumerate() {
            if code >> b & 1 == 1 {
                nb[u] |= 1 << v;
                nb[v] |= 1 << u;
                undirected.push((u, v));
            }
        }
        let edges = random_orientation(&undirected, &mut rng);
        let g = TemporalGraph::from_edges(N, &edges, &[]).map_err(|e| e.to_string())?;
        for u in 0..N {
            for q in 0..N {
                if u == q {
                    continue;
                }
                let want = (nb[u] & nb[q]).count_ones() as usize;
                let got = common_neighbors(&g, u, q).map_err(|e| e.to_string())?;
                if got != want {
                    return Err(format!("CN({u},{q}) = {got}, expected {want} on graph {code:#x}"));
                }
            }
        }
    }
    Ok(format!("CN: all {total} labelled 7-node graphs"))
}

pub fn pagerank_oracle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = 10;
        let p = rng.gen_range(0.1..0.4);
        let edges: Vec<Edge> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v && rng.gen_bool(p))
            .collect();
        let g = TemporalGraph::from_edges(n, &edges, &[]).map_err(|e| e.to_string())?;
        let got = pagerank(&g, &PageRankConfig::default()).map_err(|e| e.to_string())?;
        let want = pagerank_linear_solve(n, &edges, 0.85);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    if worst < 1e-8 {
        Ok(format!("PageRank: 10 graphs, max diff {worst:.1e}"))
    } else {
        Err(format!("PageRank max diff {worst:.3e}"))
    }
}

pub fn criterion_2() -> Check {
    let parts = [gcn_oracle_check(), auc_oracle_check(), cn_oracle_check(), pagerank_oracle_check()];
    let mut msgs = Vec::new();
    let mut ok = true;
    for p in parts {
        match p {
            Ok(m) => msgs.push(m),
            Err(m) => {
                ok = false;
                msgs.push(format!("FAILED {m}"));
            }
        }
    }
    let msg = msgs.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn criterion_3() -> Check {
    let ks = ks_statistic(&ScoredEvaluation::new(vec![1.0, 2.0], vec![2.0, 3.0]).unwrap());
    let ndcg = ndcg_at_k(&RankedPredictions::from_relevance(&[false, true]), 2).unwrap();
    let ap = map_at_k(&RankedPredictions::from_relevance(&[true, false, true]), 3, 3).unwrap();
    let auc = auc_from_counts(3, 2, 10);
    let msg = format!("KS {ks}, NDCG@2 {ndcg:.5}, AP@3 {ap:.5}, AUC(3,2,10) {auc}");
    if ks == 0.5 && (ndcg - 0.63093).abs() <= 1e-5 && (ap - 0.55556).abs() <= 1e-5 && auc == 0.4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dw = rng.gen_range(1..12);
        let dt = rng.gen_range(1..8);
        let scale = 10f64.powi(rng.gen_range(-2..3));
        let w: Vec<f64> = (0..dw).map(|_| rng.gen_range(-scale..scale)).collect();
        let t: Vec<f64> = (0..dt).map(|_| rng.gen_range(-scale..scale)).collect();
        let params = AttentionParams::new(random_tensor(&[dw, dt], &mut rng)).unwrap();
        let e = attention::attention_coefficients(&w, &t, &params).unwrap();
        let alpha = attention::attention_weights(&e).unwrap();
        for j in 0..dt {
            let col: f64 = (0..dw).map(|i| alpha.at(i, j)).sum();
            worst = worst.max((col - 1.0).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("column sum off by {worst:.2e}"));
    }
    for _ in 0..1000 {
        let dw = rng.gen_range(1..12);
        let dt = rng.gen_range(1..8);
        let n = rng.gen_range(1..4);
        let words = random_tensor(&[n, dw], &mut rng);
        let topo = random_tensor(&[n, dt], &mut rng);
        let zero = AttentionParams::new(Tensor::zeros(&[dw, dt])).unwrap();
        let batch = attention::batch_forward(&words, &topo, &zero.beta).unwrap();
        for u in 0..n {
            let w = words.row(u);
            let mean = w.iter().sum::<f64>() / dw as f64;
            let want: Vec<f64> = topo.row(u).iter().map(|t| t * mean).collect();
            let single = attention::attend(w, topo.row(u), &zero).unwrap();
            if single != want || batch.row(u) != want.as_slice() {
                return Err(format!("beta = 0 output differs from t * mean(w): {single:?} vs {want:?}"));
            }
        }
    }
    Ok(format!("column sums within {worst:.1e} over 1000 inputs; beta = 0 bit-exact over 1000 inputs"))
}

/// The default planted dataset, full model and No-link over three seeds,
/// against Common Neighbours.
pub fn criterion_5(out_root: &Path) -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        repeats: 3,
        ..ExperimentConfig::default()
    };
    let no_link: AblationConfig = "no-link".parse().unwrap();
    let plan = RunPlan {
        variants: vec![AblationConfig::FULL, no_link],
        baselines: vec![Baseline::CommonNeighbors],
    };
    let summary = run_experiment(&cfg, &plan, out_root).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let auc = |name: &str| summary.method(name).map(|m| m.mean("auc", None)).ok_or(format!("missing method {name}"));
    let (full, nolink, cn) = (auc("full")?, auc("no-link")?, auc("cn")?);
    let msg = format!(
        "mean AUC full {full:.4}, no-link {nolink:.4}, CN {cn:.4} over 3 seeds (bias {}), {elapsed:.0} s",
        cfg.synth.new_link_weak_link_bias
    );
    if full >= 0.80 && full > cn && nolink < full && elapsed < 900.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn criterion_6(out_root: &Path) -> Check {
    let cfg = tiny_config();
    let plan = RunPlan::evaluate(&cfg);
    let a = run_experiment(&cfg, &plan, &out_root.join("first")).map_err(|e| e.to_string())?;
    let b = run_experiment(&cfg, &plan, &out_root.join("second")).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for entry in std::fs::read_dir(&a.dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_file() {
            let other = b.dir.join(path.file_name().unwrap());
            let same = std::fs::read(&path).ok() == std::fs::read(&other).ok();
            if !same {
                return Err(format!("{} differs between runs", path.display()));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} run files byte-identical across two runs"))
}

pub fn criterion_7() -> Check {
    let mut cfg = tiny_config();
    cfg.epochs = 15;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = load_dataset(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let split = split_new_links(&data.graph, cfg.test_fraction, cfg.neg_per_pos, cfg.seed).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        l2_penalty: cfg.l2_penalty,
        epochs: cfg.epochs,
        seed: cfg.seed,
        gcn: cfg.gcn_config(),
        hidden: cfg.mlp_hidden.clone(),
    };
    let (pairs, _) = split.test_pairs();

    let perturbations = |model: &LinkModel| -> Result<usize, String> {
        let base = model.score_pairs(&data.features, &pairs).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ids = data.graph.node_ids();
        let mut changed = 0;
        for _ in 0..100 {
            let mut records = data.features.numeric.log().records().to_vec();
            for _ in 0..rng.gen_range(1..200) {
                let (src, dst) = (ids[rng.gen_range(0..ids.len())], ids[rng.gen_range(0..ids.len())]);
                records.push(Interaction {
                    src,
                    dst,
                    kind: InteractionKind::ALL[rng.gen_range(0..InteractionKind::ALL.len())],
                    quality: rng.gen_range(0..20),
                    timestamp: cfg.cutoff_t,
                });
            }
            let mut features = data.features.clone();
            features.numeric = NumericFeatures::new(InteractionLog::new(records, cfg.cutoff_t), ids);
            let scores = model.score_pairs(&features, &pairs).map_err(|e| e.to_string())?;
            if scores != base {
                changed += 1;
            }
        }
        Ok(changed)
    };
    let no_link: AblationConfig = "no-link".parse().unwrap();
    let masked = train(&data.features, &split, no_link, &tc).map_err(|e| e.to_string())?;
    let changed_masked = perturbations(&masked.model)?;
    // Control: the same perturbations must move the full model's scores.
    let full = train(&data.features, &split, AblationConfig::FULL, &tc).map_err(|e| e.to_string())?;
    let changed_full = perturbations(&full.model)?;

    let no_att: AblationConfig = "no-attention".parse().unwrap();
    let run = train(&data.features, &split, no_att, &tc).map_err(|e| e.to_string())?;
    let beta_slot = PARAM_GROUPS.iter().position(|g| *g == "attention.beta").unwrap();
    let beta_grad_max = run.grad_trace.iter().map(|g| g[beta_slot]).fold(0.0, f64::max);
    let init = LinkModel::init(data.features.node_count(), data.features.word_dim(), &tc.gcn, &tc.hidden, no_att, tc.seed).unwrap();
    let beta_untouched = run.model.attention.beta == init.attention.beta;

    let msg = format!(
        "no-link: {changed_masked}/100 perturbations changed scores (full model: {changed_full}/100); \
         no-attention: max |beta grad| {beta_grad_max:e} over {} epochs, beta unchanged: {beta_untouched}",
        run.grad_trace.len()
    );
    if changed_masked == 0 && changed_full > 0 && beta_grad_max == 0.0 && beta_untouched {
        Ok(msg)
    } else {
        Err(msg)
    }
}
