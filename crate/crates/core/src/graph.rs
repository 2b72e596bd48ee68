//! Two-snapshot directed graph, GCN adjacency, and new-link splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, Tensor};

pub type Edge = (usize, usize);

/// One line of an edge file, with external ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub src: u64,
    pub dst: u64,
    pub timestamp: i64,
}

impl EdgeRecord {
    pub fn new(src: u64, dst: u64, timestamp: i64) -> Self {
        Self { src, dst, timestamp }
    }
}

/// Counts of records that did not make it into the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub late_records: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Directed graph observed at two cutoffs `t < t'`.
///
/// Node indices are contiguous; `node_ids` maps them back to external ids
/// (ascending). Immutable once built.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    node_ids: Vec<u64>,
    edges_t: BTreeSet<Edge>,
    edges_t_prime: BTreeSet<Edge>,
    successors_t: Vec<Vec<usize>>,
    neighbors_t: Vec<Vec<usize>>,
    cutoff_t: i64,
    cutoff_t_prime: i64,
    stats: BuildStats,
}

/// Builds the two snapshots from timestamped records.
pub fn build_graph(records: &[EdgeRecord], cutoff_t: i64, cutoff_t_prime: i64) -> Result<TemporalGraph> {
    if records.is_empty() {
        return Err(Error::Data("edge list is empty".into()));
    }
    if cutoff_t >= cutoff_t_prime {
        return Err(Error::Config(format!(
            "cutoff t ({cutoff_t}) must be earlier than t' ({cutoff_t_prime})"
        )));
    }
    let mut stats = BuildStats::default();
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        if r.timestamp > cutoff_t_prime {
            stats.late_records += 1;
        } else if r.src == r.dst {
            stats.self_loops += 1;
        } else {
            kept.push(*r);
        }
    }
    if stats.late_records > 0 {
        warn!("{} edge records after t' ignored", stats.late_records);
    }
    let node_ids: Vec<u64> = kept
        .iter()
        .flat_map(|r| [r.src, r.dst])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if node_ids.is_empty() {
        return Err(Error::Data("no usable edge records before t'".into()));
    }
    let index: BTreeMap<u64, usize> = node_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut edges_t = BTreeSet::new();
    let mut edges_t_prime = BTreeSet::new();
    for r in &kept {
        let e = (index[&r.src], index[&r.dst]);
        if !edges_t_prime.insert(e) {
            stats.duplicates += 1;
        }
        if r.timestamp <= cutoff_t {
            edges_t.insert(e);
        }
    }
    Ok(TemporalGraph::assemble(node_ids, edges_t, edges_t_prime, cutoff_t, cutoff_t_prime, stats))
}

impl TemporalGraph {
    /// Builds directly from index-space edge sets (`edges_t` is merged into
    /// `edges_t_prime`).
    pub fn from_edges(node_count: usize, edges_t: &[Edge], new_edges: &[Edge]) -> Result<Self> {
        let mut et = BTreeSet::new();
        let mut etp = BTreeSet::new();
        for &(u, v) in edges_t.iter().chain(new_edges) {
            if u >= node_count || v >= node_count {
                return Err(Error::invalid(format!("edge ({u},{v}) out of range for {node_count} nodes")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop ({u},{u})")));
            }
        }
        et.extend(edges_t.iter().copied());
        etp.extend(edges_t.iter().copied());
        etp.extend(new_edges.iter().copied());
        Ok(Self::assemble(
            (0..node_count as u64).collect(),
            et,
            etp,
            0,
            1,
            BuildStats::default(),
        ))
    }

    fn assemble(
        node_ids: Vec<u64>,
        edges_t: BTreeSet<Edge>,
        edges_t_prime: BTreeSet<Edge>,
        cutoff_t: i64,
        cutoff_t_prime: i64,
        stats: BuildStats,
    ) -> Self {
        let n = node_ids.len();
        let mut successors_t = vec![Vec::new(); n];
        let mut sym: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(u, v) in &edges_t {
            successors_t[u].push(v);
            sym[u].insert(v);
            sym[v].insert(u);
        }
        Self {
            node_ids,
            edges_t,
            edges_t_prime,
            successors_t,
            neighbors_t: sym.into_iter().map(|s| s.into_iter().collect()).collect(),
            cutoff_t,
            cutoff_t_prime,
            stats,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn index_of(&self, external: u64) -> Option<usize> {
        self.node_ids.binary_search(&external).ok()
    }

    pub fn edges_t(&self) -> &BTreeSet<Edge> {
        &self.edges_t
    }

    pub fn edges_t_prime(&self) -> &BTreeSet<Edge> {
        &self.edges_t_prime
    }

    pub fn cutoffs(&self) -> (i64, i64) {
        (self.cutoff_t, self.cutoff_t_prime)
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    /// Links present at `t'` but not at `t`, ascending.
    pub fn new_links(&self) -> Vec<Edge> {
        self.edges_t_prime.difference(&self.edges_t).copied().collect()
    }

    /// Directed successors at time `t`.
    pub fn successors(&self, u: usize) -> &[usize] {
        &self.successors_t[u]
    }

    /// Undirected neighborhood at time `t` (sorted, no self).
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors_t[u]
    }

    fn check_node(&self, u: usize) -> Result<()> {
        if u >= self.node_count() {
            return Err(Error::invalid(format!(
                "node {u} out of range for {} nodes",
                self.node_count()
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_node(&self, u: usize) -> Result<()> {
        self.check_node(u)
    }
}

/// `A_sym + I` over the snapshot at `t`, dense.
pub fn adjacency_with_self_loops(g: &TemporalGraph) -> Tensor {
    let n = g.node_count();
    let mut a = Tensor::identity(n);
    let data = a.data_mut();
    for u in 0..n {
        for &v in g.neighbors(u) {
            data[u * n + v] = 1.0;
        }
    }
    a
}

/// `D^-1/2 (A_sym + I) D^-1/2`, dense.
pub fn normalized_adjacency(g: &TemporalGraph) -> Tensor {
    normalized_adjacency_sparse(g).to_dense()
}

/// Sparse form of [`normalized_adjacency`], used by the GCN.
pub fn normalized_adjacency_sparse(g: &TemporalGraph) -> CsrMatrix {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / ((g.neighbors(u).len() + 1) as f64).sqrt())
        .collect();
    let mut trip = Vec::with_capacity(n + 2 * g.edges_t().len());
    for u in 0..n {
        trip.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
        for &v in g.neighbors(u) {
            trip.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
        }
    }
    CsrMatrix::from_triplets(n, n, trip)
}

/// Train/test split of the new links plus sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train_pos: Vec<Edge>,
    pub train_neg: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

impl EdgeSplit {
    /// Training pairs with labels, positives first.
    pub fn train_pairs(&self) -> (Vec<Edge>, Vec<f64>) {
        labelled(&self.train_pos, &self.train_neg)
    }

    /// Evaluation candidates with labels, positives first.
    pub fn test_pairs(&self) -> (Vec<Edge>, Vec<f64>) {
        labelled(&self.test_pos, &self.test_neg)
    }
}

fn labelled(pos: &[Edge], neg: &[Edge]) -> (Vec<Edge>, Vec<f64>) {
    let pairs = pos.iter().chain(neg).copied().collect();
    let labels = std::iter::repeat_n(1.0, pos.len())
        .chain(std::iter::repeat_n(0.0, neg.len()))
        .collect();
    (pairs, labels)
}

/// Shuffles the new links with `seed`, holds out `test_fraction` of them,
/// and samples `neg_per_pos` non-edges (absent at `t'`) per positive on each
/// side. Train and test negatives are disjoint.
pub fn split_new_links(g: &TemporalGraph, test_fraction: f64, neg_per_pos: usize, seed: u64) -> Result<EdgeSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    if neg_per_pos == 0 {
        return Err(Error::Config("neg_per_pos must be at least 1".into()));
    }
    let mut links = g.new_links();
    if links.is_empty() {
        return Err(Error::Data("no new links between t and t'".into()));
    }
    if links.len() < 2 {
        return Err(Error::Data("need at least two new links to split train/test".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    links.shuffle(&mut rng);
    let n_test = ((test_fraction * links.len() as f64).round() as usize).clamp(1, links.len() - 1);
    let test_pos = links.split_off(links.len() - n_test);
    let train_pos = links;

    let n = g.node_count();
    let needed = neg_per_pos * (train_pos.len() + test_pos.len());
    let available = (n * n.saturating_sub(1)).saturating_sub(g.edges_t_prime().len());
    if needed > available {
        return Err(Error::Data(format!(
            "need {needed} negative pairs but only {available} non-edges exist"
        )));
    }
    let mut used = HashSet::with_capacity(needed);
    let max_attempts = 100 * needed + 10_000;
    let mut attempts = 0usize;
    let mut draw = |count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Edge>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::Data(format!(
                    "negative sampling exhausted after {max_attempts} attempts; graph too dense"
                )));
            }
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || g.edges_t_prime().contains(&(u, v)) || !used.insert((u, v)) {
                continue;
            }
            out.push((u, v));
        }
        Ok(out)
    };
    let train_neg = draw(neg_per_pos * train_pos.len(), &mut rng)?;
    let test_neg = draw(neg_per_pos * test_pos.len(), &mut rng)?;
    Ok(EdgeSplit {
        train_pos,
        train_neg,
        test_pos,
        test_neg,
    })
}

/// Parses `src<TAB>dst<TAB>timestamp` lines; `#` lines and blanks are skipped.
pub fn parse_edge_records(reader: impl BufRead, label: &Path) -> Result<Vec<EdgeRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Error::Parse {
            path: label.to_path_buf(),
            line: i + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<i64> {
            s.trim()
                .parse::<i64>()
                .map_err(|_| parse_err(format!("invalid {what} {s:?}")))
        };
        let src = num(fields[0], "src")?;
        let dst = num(fields[1], "dst")?;
        if src < 0 || dst < 0 {
            return Err(parse_err("node ids must be non-negative".into()));
        }
        out.push(EdgeRecord::new(src as u64, dst as u64, num(fields[2], "timestamp")?));
    }
    Ok(out)
}

pub fn read_edge_file(path: &Path) -> Result<Vec<EdgeRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_records(std::io::BufReader::new(f), path)
}

pub fn write_edge_records(mut w: impl Write, records: &[EdgeRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.src, r.dst, r.timestamp)?;
    }
    Ok(())
}
