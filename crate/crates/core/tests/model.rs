mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkpred::experiment::load_dataset;
use linkpred::graph::{split_new_links, Edge};
use linkpred::predictor::{is_new_link, rank_candidates, train, AblationConfig, LinkModel, TrainConfig};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// MLP forward without any numeric input columns at all.
fn score_without_numeric(model: &LinkModel, x: &linkpred::tensor::Tensor, (u, q): Edge) -> f64 {
    let first = model.mlp.first_bias.len();
    let mut h: Vec<f64> = (0..first)
        .map(|j| {
            let src: f64 = x.row(u).iter().enumerate().map(|(i, v)| v * model.mlp.src_weight.at(i, j)).sum();
            let dst: f64 = x.row(q).iter().enumerate().map(|(i, v)| v * model.mlp.dst_weight.at(i, j)).sum();
            src + dst + model.mlp.first_bias.data()[j]
        })
        .collect();
    for layer in &model.mlp.layers {
        let a: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
        h = (0..layer.weight.cols())
            .map(|j| a.iter().enumerate().map(|(i, v)| v * layer.weight.at(i, j)).sum::<f64>() + layer.bias.data()[j])
            .collect();
    }
    sigmoid(h[0])
}

struct Setup {
    data: linkpred::experiment::Dataset,
    split: linkpred::graph::EdgeSplit,
    train_cfg: TrainConfig,
    _dir: tempfile::TempDir,
}

fn setup(epochs: usize) -> Setup {
    let cfg = common::tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let data = load_dataset(&cfg, dir.path()).unwrap();
    let split = split_new_links(&data.graph, cfg.test_fraction, cfg.neg_per_pos, cfg.seed).unwrap();
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        l2_penalty: cfg.l2_penalty,
        epochs,
        seed: cfg.seed,
        gcn: cfg.gcn_config(),
        hidden: cfg.mlp_hidden.clone(),
    };
    Setup {
        data,
        split,
        train_cfg,
        _dir: dir,
    }
}

#[test]
fn masked_numeric_equals_removed_numeric() {
    let s = setup(10);
    let no_link: AblationConfig = "no-link".parse().unwrap();
    let model = train(&s.data.features, &s.split, no_link, &s.train_cfg).unwrap().model;
    let (pairs, _) = s.split.test_pairs();
    let scores = model.score_pairs(&s.data.features, &pairs).unwrap();
    let x = model.user_embeddings(&s.data.features).unwrap();
    for (p, got) in pairs.iter().zip(&scores) {
        let want = score_without_numeric(&model, &x, *p);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let s = setup(30);
    let a = train(&s.data.features, &s.split, AblationConfig::FULL, &s.train_cfg).unwrap();
    let b = train(&s.data.features, &s.split, AblationConfig::FULL, &s.train_cfg).unwrap();
    assert!(a.loss_trace.iter().all(|l| l.is_finite()));
    assert!(a.loss_trace.last().unwrap() < a.loss_trace.first().unwrap());
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.model, b.model);
}

#[test]
fn every_variant_trains() {
    let s = setup(3);
    for v in AblationConfig::variants() {
        let out = train(&s.data.features, &s.split, v, &s.train_cfg).unwrap();
        assert_eq!(out.loss_trace.len(), 3);
        assert_eq!(out.model.ablation, v);
    }
}

#[test]
fn ranking_agrees_with_independent_scoring() {
    let s = setup(5);
    let model = train(&s.data.features, &s.split, AblationConfig::FULL, &s.train_cfg).unwrap().model;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = s.data.features.node_count();
    let mut candidates: Vec<Edge> = s.split.test_pos.clone();
    candidates.extend((0..60).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).filter(|(u, q)| u != q));
    candidates.sort_unstable();
    candidates.dedup();
    let mut external: Vec<(f64, Edge)> = candidates
        .iter()
        .map(|&(u, q)| (model.score_link_direct(&s.data.features, u, q).unwrap(), (u, q)))
        .collect();
    external.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let k = candidates.len();
    let ranked = rank_candidates(&model, &s.data.graph, &s.data.features, &candidates, k).unwrap();
    assert_eq!(ranked.len(), k);
    for (item, (score, pair)) in ranked.items().iter().zip(&external) {
        assert_eq!(item.pair, *pair);
        assert!((item.score - score).abs() < 1e-12);
        assert_eq!(item.relevant, is_new_link(&s.data.graph, pair));
    }
    let top = rank_candidates(&model, &s.data.graph, &s.data.features, &candidates, 5).unwrap();
    assert_eq!(top.items(), &ranked.items()[..5]);
}
