//! Pipeline orchestration and run outputs.
//!
//! A run directory `run-<hash>` holds `report.tsv`, `sweep.csv`,
//! `predictions-<method>.tsv`, `loss-<variant>.tsv` and one
//! `checkpoint-<seed>` per repeat. Predictions files hold one block per seed,
//! introduced by `# seed = N`, with `src  dst  score  label` rows in ranking
//! order; every metric in the report can be recomputed from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::info;
use sha2::{Digest, Sha256};

use crate::baselines::{common_neighbors, pagerank, pagerank_link_score, PageRankConfig};
use crate::config::{Baseline, ExperimentConfig};
use crate::datagen::{generate, write_dataset};
use crate::error::{Error, Result};
use crate::graph::{build_graph, read_edge_file, split_new_links, Edge, TemporalGraph};
use crate::metrics::{auc_sampled, ks_statistic, map_at_k, ndcg_at_k, paired_t_test, RankedItem, RankedPredictions, ScoredEvaluation};
use crate::numeric::{read_interaction_file, InteractionLog, NumericFeatures};
use crate::predictor::{train, AblationConfig, FeatureSet, LinkModel, TrainConfig};
use crate::tensor::{Param, Tensor};
use crate::text::{build_profiles, read_activity_file, train_word_embeddings, Corpus, SkipGramConfig};

/// What a run trains and evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub variants: Vec<AblationConfig>,
    pub baselines: Vec<Baseline>,
}

impl RunPlan {
    /// The configured variant plus the configured baselines.
    pub fn evaluate(cfg: &ExperimentConfig) -> Self {
        Self {
            variants: vec![cfg.variant],
            baselines: cfg.baselines.clone(),
        }
    }

    pub fn train_only(cfg: &ExperimentConfig) -> Self {
        Self {
            variants: vec![cfg.variant],
            baselines: Vec::new(),
        }
    }

    pub fn ablate(cfg: &ExperimentConfig) -> Self {
        Self {
            variants: AblationConfig::variants().to_vec(),
            baselines: cfg.baselines.clone(),
        }
    }

    pub fn baselines_only(cfg: &ExperimentConfig) -> Self {
        Self {
            variants: Vec::new(),
            baselines: cfg.baselines.clone(),
        }
    }

    pub fn method_names(&self) -> Vec<String> {
        self.variants
            .iter()
            .map(|v| v.name().to_string())
            .chain(self.baselines.iter().map(|b| b.name().to_string()))
            .collect()
    }
}

/// Graph and node features shared by every repeat.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: TemporalGraph,
    pub features: FeatureSet,
}

/// Loads the configured files, or generates the synthetic dataset into
/// `data_dir` and loads it back.
pub fn load_dataset(cfg: &ExperimentConfig, data_dir: &Path) -> Result<Dataset> {
    let (edges, activities, interactions) = if cfg.uses_synthetic_data() {
        let data = generate(&cfg.synth_config()).map_err(|e| e.in_stage("generate"))?;
        let files = write_dataset(&data, data_dir).map_err(|e| e.in_stage("generate"))?;
        (files.edges, files.activities, files.interactions)
    } else {
        let get = |p: &Option<PathBuf>| p.clone().expect("validated");
        (get(&cfg.edges), get(&cfg.activities), get(&cfg.interactions))
    };

    let load = |e: Error| e.in_stage("load");
    let records = read_edge_file(&edges).map_err(load)?;
    let graph = build_graph(&records, cfg.cutoff_t, cfg.cutoff_t_prime).map_err(load)?;
    let docs = read_activity_file(&activities).map_err(load)?;
    let interactions = read_interaction_file(&interactions).map_err(load)?;

    let text = |e: Error| e.in_stage("text-features");
    let corpus = Corpus::new(docs.into_iter().filter(|d| d.timestamp <= cfg.cutoff_t).collect());
    let table = train_word_embeddings(
        &corpus,
        &SkipGramConfig {
            dim: cfg.word_dim,
            epochs: cfg.w2v_epochs,
            window: cfg.w2v_window,
            negatives: cfg.w2v_negatives,
            seed: cfg.seed,
            ..SkipGramConfig::default()
        },
    )
    .map_err(text)?;
    let profiles = build_profiles(graph.node_ids(), &corpus, &table, cfg.keywords, cfg.short_fraction).map_err(text)?;
    let log = InteractionLog::new(interactions, cfg.cutoff_t);
    let numeric = NumericFeatures::new(log, graph.node_ids());
    let features = FeatureSet::new(&graph, &profiles, numeric).map_err(text)?;
    info!(
        "loaded {} nodes, {} edges at t, {} new links",
        graph.node_count(),
        graph.edges_t().len(),
        graph.new_links().len()
    );
    Ok(Dataset { graph, features })
}

/// Scored test pairs of one method in one repeat, in ranking order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub seed: u64,
    pub ranked: RankedPredictions,
}

impl Predictions {
    pub fn new(seed: u64, pairs: &[Edge], scores: &[f64], labels: &[f64]) -> Result<Self> {
        let relevant: std::collections::HashSet<Edge> = pairs
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l > 0.5)
            .map(|(p, _)| *p)
            .collect();
        Ok(Self {
            seed,
            ranked: RankedPredictions::from_scores(pairs, scores, |e| relevant.contains(e))?,
        })
    }

    pub fn evaluation(&self) -> Result<ScoredEvaluation> {
        let (pos, neg): (Vec<&RankedItem>, Vec<&RankedItem>) = self.ranked.items().iter().partition(|i| i.relevant);
        ScoredEvaluation::new(
            pos.iter().map(|i| i.score).collect(),
            neg.iter().map(|i| i.score).collect(),
        )
    }
}

/// One `metric  K  value` row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: &'static str,
    pub k: Option<usize>,
    pub value: f64,
}

impl MetricRow {
    fn k_label(&self) -> String {
        self.k.map_or("-".into(), |k| k.to_string())
    }
}

/// Ranking metrics at each K; errors when a K exceeds the candidate count.
pub fn ranking_metrics(p: &Predictions, ks: &[usize]) -> Result<Vec<MetricRow>> {
    let test_size = p.ranked.relevant_count().max(1);
    let mut rows = Vec::new();
    for &k in ks {
        rows.push(MetricRow {
            metric: "ndcg",
            k: Some(k),
            value: ndcg_at_k(&p.ranked, k)?,
        });
        rows.push(MetricRow {
            metric: "map",
            k: Some(k),
            value: map_at_k(&p.ranked, k, test_size)?,
        });
    }
    Ok(rows)
}

/// AUC (sampled with `auc_samples` draws seeded by the repeat seed), KS, and
/// the ranking metrics at each K.
pub fn all_metrics(p: &Predictions, ks: &[usize], auc_samples: usize) -> Result<Vec<MetricRow>> {
    let eval = p.evaluation()?;
    let mut rows = vec![
        MetricRow {
            metric: "auc",
            k: None,
            value: auc_sampled(&eval, auc_samples, p.seed)?,
        },
        MetricRow {
            metric: "ks",
            k: None,
            value: ks_statistic(&eval),
        },
    ];
    rows.extend(ranking_metrics(p, ks)?);
    Ok(rows)
}

/// Per-method results of a finished run.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub name: String,
    pub predictions: Vec<Predictions>,
    pub metrics: Vec<Vec<MetricRow>>,
    /// Per seed, the epoch loss trace (models only).
    pub loss_traces: Vec<Vec<f64>>,
}

impl MethodResult {
    /// Values of one metric across repeats.
    pub fn series(&self, metric: &str, k: Option<usize>) -> Vec<f64> {
        self.metrics
            .iter()
            .filter_map(|rows| rows.iter().find(|r| r.metric == metric && r.k == k).map(|r| r.value))
            .collect()
    }

    pub fn mean(&self, metric: &str, k: Option<usize>) -> f64 {
        mean_std(&self.series(metric, k)).0
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub report: String,
    pub methods: Vec<MethodResult>,
}

impl RunSummary {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Hash naming the run directory: the resolved config plus the plan.
pub fn run_id(cfg: &ExperimentConfig, plan: &RunPlan) -> String {
    let mut lines = cfg.to_lines();
    lines.push(("methods", plan.method_names().join(",")));
    let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    Sha256::digest(text.as_bytes())
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs the plan under `out_root/run-<hash>` and writes every output file.
pub fn run_experiment(cfg: &ExperimentConfig, plan: &RunPlan, out_root: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    for v in &plan.variants {
        v.validate()?;
    }
    if plan.variants.is_empty() && plan.baselines.is_empty() {
        return Err(Error::Config("nothing to run: no variants and no baselines".into()));
    }
    let dir = out_root.join(format!("run-{}", run_id(cfg, plan)));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let data = load_dataset(cfg, &dir.join("data"))?;
    let (graph, features) = (&data.graph, &data.features);

    let ranks = if plan.baselines.contains(&Baseline::PageRank) {
        let pr_cfg = PageRankConfig {
            damping: cfg.pagerank_damping,
            ..PageRankConfig::default()
        };
        Some(pagerank(graph, &pr_cfg).map_err(|e| e.in_stage("baseline"))?)
    } else {
        None
    };

    let mut methods: Vec<MethodResult> = plan
        .method_names()
        .into_iter()
        .map(|name| MethodResult {
            name,
            predictions: Vec::new(),
            metrics: Vec::new(),
            loss_traces: Vec::new(),
        })
        .collect();

    for r in 0..cfg.repeats {
        let seed = cfg.seed + r as u64;
        let split = split_new_links(graph, cfg.test_fraction, cfg.neg_per_pos, seed).map_err(|e| e.in_stage("split"))?;
        let (test_pairs, test_labels) = split.test_pairs();
        let mut checkpoint = Vec::new();
        for (slot, variant) in plan.variants.iter().enumerate() {
            let train_cfg = TrainConfig {
                learning_rate: cfg.learning_rate,
                l2_penalty: cfg.l2_penalty,
                epochs: cfg.epochs,
                seed,
                gcn: cfg.gcn_config(),
                hidden: cfg.mlp_hidden.clone(),
            };
            info!("training {variant} with seed {seed}");
            let outcome = train(features, &split, *variant, &train_cfg).map_err(|e| e.in_stage("train"))?;
            let scores = outcome
                .model
                .score_pairs(features, &test_pairs)
                .map_err(|e| e.in_stage("evaluate"))?;
            methods[slot].loss_traces.push(outcome.loss_trace);
            checkpoint.push(outcome.model);
            push_result(&mut methods[slot], seed, &test_pairs, &scores, &test_labels, cfg)?;
        }
        for (j, b) in plan.baselines.iter().enumerate() {
            let scores: Vec<f64> = test_pairs
                .iter()
                .map(|&(u, q)| match b {
                    Baseline::CommonNeighbors => common_neighbors(graph, u, q).map(|c| c as f64),
                    Baseline::PageRank => pagerank_link_score(graph, ranks.as_deref().expect("computed"), u, q),
                })
                .collect::<Result<_>>()
                .map_err(|e| e.in_stage("baseline"))?;
            let slot = plan.variants.len() + j;
            push_result(&mut methods[slot], seed, &test_pairs, &scores, &test_labels, cfg)?;
        }
        if !checkpoint.is_empty() {
            let path = dir.join(format!("checkpoint-{seed}"));
            write_file(&path, &checkpoint_text(&checkpoint))?;
        }
    }

    let report = render_report(cfg, plan, &methods)?;
    write_file(&dir.join("report.tsv"), &report)?;
    write_file(&dir.join("sweep.csv"), &render_sweep(&methods, &cfg.k))?;
    for m in &methods {
        write_file(
            &dir.join(format!("predictions-{}.tsv", m.name)),
            &render_predictions(graph, &m.predictions),
        )?;
        if !m.loss_traces.is_empty() {
            let mut s = String::from("# seed\tepoch\tloss\n");
            for (r, trace) in m.loss_traces.iter().enumerate() {
                for (e, l) in trace.iter().enumerate() {
                    let _ = writeln!(s, "{}\t{e}\t{l}", cfg.seed + r as u64);
                }
            }
            write_file(&dir.join(format!("loss-{}.tsv", m.name)), &s)?;
        }
    }
    Ok(RunSummary { dir, report, methods })
}

fn push_result(m: &mut MethodResult, seed: u64, pairs: &[Edge], scores: &[f64], labels: &[f64], cfg: &ExperimentConfig) -> Result<()> {
    let stage = |e: Error| e.in_stage("evaluate");
    let p = Predictions::new(seed, pairs, scores, labels).map_err(stage)?;
    m.metrics.push(all_metrics(&p, &cfg.k, cfg.auc_samples).map_err(stage)?);
    m.predictions.push(p);
    Ok(())
}

fn metric_keys(ks: &[usize]) -> Vec<(&'static str, Option<usize>)> {
    let mut keys = vec![("auc", None), ("ks", None)];
    for &k in ks {
        keys.push(("ndcg", Some(k)));
        keys.push(("map", Some(k)));
    }
    keys
}

fn k_label(k: Option<usize>) -> String {
    k.map_or("-".into(), |k| k.to_string())
}

fn render_report(cfg: &ExperimentConfig, plan: &RunPlan, methods: &[MethodResult]) -> Result<String> {
    let mut s = String::from("# linkpred report\n");
    for (k, v) in cfg.to_lines() {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "# methods = {}", plan.method_names().join(","));
    for m in methods {
        for (rows, p) in m.metrics.iter().zip(&m.predictions) {
            let _ = writeln!(s, "[{} seed={}]", m.name, p.seed);
            for r in rows {
                let _ = writeln!(s, "{}\t{}\t{}", r.metric, r.k_label(), r.value);
            }
        }
        let _ = writeln!(s, "[{} mean]", m.name);
        for (metric, k) in metric_keys(&cfg.k) {
            let _ = writeln!(s, "{metric}\t{}\t{}", k_label(k), m.mean(metric, k));
        }
    }
    if let Some((primary, others)) = methods.split_first() {
        for other in others {
            let _ = writeln!(s, "[ttest {} vs {}]", primary.name, other.name);
            if cfg.repeats < 2 {
                let _ = writeln!(s, "# needs repeats >= 2");
                continue;
            }
            for (metric, k) in metric_keys(&cfg.k) {
                let a = primary.series(metric, k);
                let b = other.series(metric, k);
                match paired_t_test(&a, &b) {
                    Ok(t) => {
                        let _ = writeln!(s, "{metric}.t_stat\t{}\t{}", k_label(k), t.t_stat);
                        let _ = writeln!(s, "{metric}.p_value\t{}\t{}", k_label(k), t.p_value);
                    }
                    Err(Error::InvalidArgument(_)) => {
                        let _ = writeln!(s, "{metric}.t_stat\t{}\tdegenerate", k_label(k));
                    }
                    Err(e) => return Err(e.in_stage("report")),
                }
            }
        }
    }
    Ok(s)
}

fn render_sweep(methods: &[MethodResult], ks: &[usize]) -> String {
    let mut s = String::from("method,metric,K,mean,stddev\n");
    for m in methods {
        for (metric, k) in metric_keys(ks) {
            let (mean, sd) = mean_std(&m.series(metric, k));
            let _ = writeln!(s, "{},{metric},{},{mean},{sd}", m.name, k_label(k));
        }
    }
    s
}

fn render_predictions(graph: &TemporalGraph, preds: &[Predictions]) -> String {
    let ids = graph.node_ids();
    let mut s = String::new();
    for p in preds {
        let _ = writeln!(s, "# seed = {}", p.seed);
        for item in p.ranked.items() {
            let (u, q) = item.pair;
            let _ = writeln!(s, "{}\t{}\t{}\t{}", ids[u], ids[q], item.score, u8::from(item.relevant));
        }
    }
    s
}

/// Reads a predictions file back into per-seed blocks. Pairs carry
/// external ids.
type Block = (u64, Vec<Edge>, Vec<f64>, Vec<f64>);

pub fn read_predictions(path: &Path) -> Result<Vec<Predictions>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut blocks: Vec<Block> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix("# seed = ") {
            let seed = rest.trim().parse().map_err(|_| perr(format!("bad seed {rest:?}")))?;
            blocks.push((seed, Vec::new(), Vec::new(), Vec::new()));
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let block = blocks.last_mut().ok_or_else(|| perr("row before any `# seed` line".into()))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(perr(format!("expected 4 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad number {s:?}")));
        let id = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("bad id {s:?}")));
        block.1.push((id(f[0])?, id(f[1])?));
        block.2.push(num(f[2])?);
        block.3.push(num(f[3])?);
    }
    blocks
        .into_iter()
        .map(|(seed, pairs, scores, labels)| Predictions::new(seed, &pairs, &scores, &labels))
        .collect()
}

/// NDCG@K and MAP@K for every K, recomputed from predictions files.
/// Returns `method,metric,K,mean,stddev` CSV.
pub fn sweep_k(prediction_files: &[(String, PathBuf)], ks: &[usize]) -> Result<String> {
    if ks.is_empty() {
        return Err(Error::Config("empty K list".into()));
    }
    let mut s = String::from("method,metric,K,mean,stddev\n");
    for (name, path) in prediction_files {
        let preds = read_predictions(path)?;
        if preds.is_empty() {
            return Err(Error::Data(format!("{} holds no predictions", path.display())));
        }
        let mut per_key: BTreeMap<(usize, &'static str), Vec<f64>> = BTreeMap::new();
        for p in &preds {
            for &k in ks {
                if k > p.ranked.len() {
                    return Err(Error::Config(format!(
                        "K = {k} exceeds the {} candidates in {}",
                        p.ranked.len(),
                        path.display()
                    )));
                }
            }
            for row in ranking_metrics(p, ks)? {
                per_key.entry((row.k.expect("ranking metric"), row.metric)).or_default().push(row.value);
            }
        }
        for metric in ["ndcg", "map"] {
            for &k in ks {
                let (mean, sd) = mean_std(&per_key[&(k, metric)]);
                let _ = writeln!(s, "{name},{metric},{k},{mean},{sd}");
            }
        }
    }
    Ok(s)
}

/// `predictions-<method>.tsv` files in a run directory, sorted by method.
pub fn find_prediction_files(run_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))? {
        let path = entry.map_err(|e| Error::io(run_dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(method) = name.strip_prefix("predictions-").and_then(|n| n.strip_suffix(".tsv")) {
            out.push((method.to_string(), path.clone()));
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!("no predictions files in {}", run_dir.display())));
    }
    out.sort();
    Ok(out)
}

/// Text container: `model <variant> <dropout>` headers followed by
/// `param <name> <rows> <cols>` and one line of values per row.
pub fn checkpoint_text(models: &[LinkModel]) -> String {
    let mut s = String::from("# linkpred checkpoint\n");
    for m in models {
        let _ = writeln!(s, "model {} {}", m.ablation, m.gcn.dropout);
        for p in m.params() {
            let (rows, cols) = match p.value.shape() {
                [r, c] => (*r, *c),
                [c] => (1, *c),
                _ => (1, p.value.len()),
            };
            let _ = writeln!(s, "param {} {} {}", p.name, rows, cols);
            for row in p.value.data().chunks(cols.max(1)) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
    }
    s
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<LinkModel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text).map_err(|m| Error::Data(format!("{}: {m}", path.display())))
}

fn parse_checkpoint(text: &str) -> std::result::Result<Vec<LinkModel>, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let mut models = Vec::new();
    let mut current: Option<(AblationConfig, f64, Vec<Param>)> = None;
    let finish = |cur: Option<(AblationConfig, f64, Vec<Param>)>, out: &mut Vec<LinkModel>| -> std::result::Result<(), String> {
        if let Some((ablation, dropout, params)) = cur {
            out.push(LinkModel::from_params(&params, dropout, ablation).map_err(|e| e.to_string())?);
        }
        Ok(())
    };
    while let Some(line) = lines.next() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["model", variant, dropout] => {
                finish(current.take(), &mut models)?;
                let ablation = variant.parse().map_err(|e: Error| e.to_string())?;
                let dropout = dropout.parse().map_err(|_| format!("bad dropout {dropout:?}"))?;
                current = Some((ablation, dropout, Vec::new()));
            }
            ["param", name, rows, cols] => {
                let rows: usize = rows.parse().map_err(|_| "bad row count".to_string())?;
                let cols: usize = cols.parse().map_err(|_| "bad column count".to_string())?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let row = lines.next().ok_or("truncated parameter")?;
                    for v in row.split_whitespace() {
                        data.push(v.parse::<f64>().map_err(|_| format!("bad value {v:?}"))?);
                    }
                }
                // Biases are vectors; everything else is a matrix.
                let shape = if name.starts_with("mlp.b") { vec![cols] } else { vec![rows, cols] };
                let value = Tensor::new(shape, data).map_err(|e| e.to_string())?;
                let params = &mut current.as_mut().ok_or("parameter before model header")?.2;
                params.push(Param::new(name.to_string(), value));
            }
            [] => {}
            _ => return Err(format!("unexpected line {line:?}")),
        }
    }
    finish(current, &mut models)?;
    Ok(models)
}
