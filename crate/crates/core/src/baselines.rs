//! Common Neighbors and PageRank link scores.

use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

fn check_pair(g: &TemporalGraph, u: usize, q: usize) -> Result<()> {
    g.validate_node(u)?;
    g.validate_node(q)?;
    if u == q {
        return Err(Error::invalid(format!("link score of node {u} with itself")));
    }
    Ok(())
}

/// Number of shared neighbours in the symmetrized snapshot-`t` graph.
pub fn common_neighbors(g: &TemporalGraph, u: usize, q: usize) -> Result<usize> {
    check_pair(g, u, q)?;
    let (a, b) = (g.neighbors(u), g.neighbors(q));
    // Both lists are sorted; merge-count.
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankConfig {
    pub damping: f64,
    /// Stop when the L1 change between iterates drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

/// Power iteration on the directed snapshot-`t` graph. Dangling nodes spread
/// their mass uniformly. The result sums to one.
pub fn pagerank(g: &TemporalGraph, config: &PageRankConfig) -> Result<Vec<f64>> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::invalid("PageRank of an empty graph"));
    }
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::Config(format!(
            "damping must lie in [0, 1), got {}",
            config.damping
        )));
    }
    let d = config.damping;
    let nf = n as f64;
    let mut pr = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iterations {
        let dangling: f64 = (0..n).filter(|&u| g.successors(u).is_empty()).map(|u| pr[u]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for (u, &mass) in pr.iter().enumerate() {
            let out = g.successors(u);
            if !out.is_empty() {
                let share = d * mass / out.len() as f64;
                for &v in out {
                    next[v] += share;
                }
            }
        }
        residual = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pr, &mut next);
        if residual < config.tolerance {
            return Ok(pr);
        }
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual,
    })
}

/// Link score `u → q` under PageRank: the rank of the target.
pub fn pagerank_link_score(g: &TemporalGraph, ranks: &[f64], u: usize, q: usize) -> Result<f64> {
    check_pair(g, u, q)?;
    if ranks.len() != g.node_count() {
        return Err(Error::invalid(format!(
            "{} ranks for {} nodes",
            ranks.len(),
            g.node_count()
        )));
    }
    Ok(ranks[q])
}
