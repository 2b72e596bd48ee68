//! Ranking and separation metrics: AUC (sampled and exact), KS, NDCG@K,
//! MAP@K, and a paired t-test across repeated runs.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::Edge;

/// Scores of held-out links and of non-existent links.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvaluation {
    pub pos_scores: Vec<f64>,
    pub neg_scores: Vec<f64>,
}

impl ScoredEvaluation {
    pub fn new(pos_scores: Vec<f64>, neg_scores: Vec<f64>) -> Result<Self> {
        if pos_scores.is_empty() || neg_scores.is_empty() {
            return Err(Error::invalid("positive and negative score sets must be non-empty"));
        }
        if pos_scores.iter().chain(&neg_scores).any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite score".into()));
        }
        Ok(Self {
            pos_scores,
            neg_scores,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedItem {
    pub pair: Edge,
    pub score: f64,
    pub relevant: bool,
}

/// Candidates sorted by descending score, ties by `(src, dst)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPredictions {
    items: Vec<RankedItem>,
}

impl RankedPredictions {
    pub fn new(mut items: Vec<RankedItem>) -> Self {
        items.sort_by(compare_ranked);
        Self { items }
    }

    /// Ranks `pairs` by `scores`, marking relevance with `is_relevant`.
    pub fn from_scores(pairs: &[Edge], scores: &[f64], is_relevant: impl Fn(&Edge) -> bool) -> Result<Self> {
        if pairs.len() != scores.len() {
            return Err(Error::invalid(format!(
                "{} pairs but {} scores",
                pairs.len(),
                scores.len()
            )));
        }
        Ok(Self::new(
            pairs
                .iter()
                .zip(scores)
                .map(|(p, s)| RankedItem {
                    pair: *p,
                    score: *s,
                    relevant: is_relevant(p),
                })
                .collect(),
        ))
    }

    /// Relevance flags in rank order (ties already resolved).
    pub fn from_relevance(relevance: &[bool]) -> Self {
        let n = relevance.len();
        Self {
            items: relevance
                .iter()
                .enumerate()
                .map(|(i, r)| RankedItem {
                    pair: (i, i),
                    score: (n - i) as f64,
                    relevant: *r,
                })
                .collect(),
        }
    }

    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn relevant_count(&self) -> usize {
        self.items.iter().filter(|i| i.relevant).count()
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }
}

fn compare_ranked(a: &RankedItem, b: &RankedItem) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.pair.cmp(&b.pair))
}

/// `(n' + 0.5 n'') / n` for `n` seeded uniform draws of a (pos, neg) pair.
pub fn auc_sampled(eval: &ScoredEvaluation, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("AUC sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut greater, mut ties) = (0usize, 0usize);
    for _ in 0..n {
        let p = eval.pos_scores[rng.gen_range(0..eval.pos_scores.len())];
        let q = eval.neg_scores[rng.gen_range(0..eval.neg_scores.len())];
        match p.total_cmp(&q) {
            Ordering::Greater => greater += 1,
            Ordering::Equal => ties += 1,
            Ordering::Less => {}
        }
    }
    Ok(auc_from_counts(greater, ties, n))
}

/// `(n' + 0.5 n'') / n`.
pub fn auc_from_counts(greater: usize, ties: usize, n: usize) -> f64 {
    (greater as f64 + 0.5 * ties as f64) / n as f64
}

/// Exact AUC over all pos×neg pairs via the rank-sum with mid-ranks for ties.
pub fn auc_exact(eval: &ScoredEvaluation) -> f64 {
    let (np, nn) = (eval.pos_scores.len(), eval.neg_scores.len());
    let mut pooled: Vec<(f64, bool)> = eval
        .pos_scores
        .iter()
        .map(|s| (*s, true))
        .chain(eval.neg_scores.iter().map(|s| (*s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * pooled[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (np * (np + 1)) as f64 / 2.0;
    u / (np * nn) as f64
}

/// Largest gap between the two right-continuous empirical CDFs.
pub fn ks_statistic(eval: &ScoredEvaluation) -> f64 {
    let mut pos = eval.pos_scores.clone();
    let mut neg = eval.neg_scores.clone();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < pos.len() || j < neg.len() {
        let x = match (pos.get(i), neg.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        while i < pos.len() && pos[i] <= x {
            i += 1;
        }
        while j < neg.len() && neg[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / np - j as f64 / nn).abs());
    }
    best
}

fn dcg(relevance: impl Iterator<Item = bool>) -> f64 {
    relevance
        .enumerate()
        .filter(|(_, r)| *r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@K with binary relevance; the ideal ordering puts every relevant
/// candidate first. Zero when the pool has no relevant item.
pub fn ndcg_at_k(ranked: &RankedPredictions, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if k > ranked.len() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds the {} ranked candidates",
            ranked.len()
        )));
    }
    let total_relevant = ranked.relevant_count();
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let actual = dcg(ranked.items.iter().take(k).map(|i| i.relevant));
    let ideal = dcg((0..k).map(|i| i < total_relevant));
    Ok(actual / ideal)
}

/// AP@K = sum over hits n ≤ K of Precision@n, divided by `min(K, test_size)`.
pub fn map_at_k(ranked: &RankedPredictions, k: usize, test_size: usize) -> Result<f64> {
    if k == 0 || test_size == 0 {
        return Err(Error::invalid("K and test size must be at least 1"));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (n, item) in ranked.items.iter().take(k).enumerate() {
        if item.relevant {
            hits += 1;
            total += hits as f64 / (n + 1) as f64;
        }
    }
    Ok(total / k.min(test_size) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 runs"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::invalid(
            "paired differences have zero variance; t statistic undefined",
        ));
    }
    let t_stat = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t_stat.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t_stat, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(p: &[f64], n: &[f64]) -> ScoredEvaluation {
        ScoredEvaluation::new(p.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn auc_counts_formula() {
        assert_eq!(auc_from_counts(3, 2, 10), 0.4);
    }

    #[test]
    fn auc_separated_and_empty() {
        let e = eval(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(auc_sampled(&e, 1000, 1).unwrap(), 1.0);
        assert_eq!(auc_exact(&e), 1.0);
        assert!(ScoredEvaluation::new(vec![], vec![1.0]).is_err());
        assert!(auc_sampled(&e, 0, 1).is_err());
    }

    #[test]
    fn auc_exact_examples() {
        assert_eq!(auc_exact(&eval(&[2.0], &[1.0])), 1.0);
        assert_eq!(auc_exact(&eval(&[1.0], &[1.0])), 0.5);
        assert_eq!(auc_exact(&eval(&[3.0, 1.0], &[2.0])), 0.5);
    }

    #[test]
    fn auc_sampled_is_seeded() {
        let e = eval(&[0.1, 0.5, 0.9], &[0.2, 0.6]);
        assert_eq!(auc_sampled(&e, 500, 4).unwrap(), auc_sampled(&e, 500, 4).unwrap());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&eval(&[1.0, 2.0], &[1.0, 2.0])), 0.0);
        assert_eq!(ks_statistic(&eval(&[5.0, 6.0], &[1.0, 2.0])), 1.0);
        assert_eq!(ks_statistic(&eval(&[1.0, 2.0], &[2.0, 3.0])), 0.5);
    }

    #[test]
    fn ndcg_examples() {
        let all = RankedPredictions::from_relevance(&[true, true, false]);
        assert_eq!(ndcg_at_k(&all, 2).unwrap(), 1.0);
        let miss = RankedPredictions::from_relevance(&[false, false, true]);
        assert_eq!(ndcg_at_k(&miss, 2).unwrap(), 0.0);
        let second = RankedPredictions::from_relevance(&[false, true]);
        assert!((ndcg_at_k(&second, 2).unwrap() - 0.63093).abs() < 1e-5);
        let none = RankedPredictions::from_relevance(&[false, false]);
        assert_eq!(ndcg_at_k(&none, 2).unwrap(), 0.0);
        assert!(ndcg_at_k(&second, 0).is_err());
        assert!(ndcg_at_k(&second, 3).is_err());
    }

    #[test]
    fn map_examples() {
        let all = RankedPredictions::from_relevance(&[true, true, true]);
        assert_eq!(map_at_k(&all, 3, 5).unwrap(), 1.0);
        let none = RankedPredictions::from_relevance(&[false, false, false]);
        assert_eq!(map_at_k(&none, 3, 5).unwrap(), 0.0);
        let r = RankedPredictions::from_relevance(&[true, false, true]);
        assert!((map_at_k(&r, 3, 3).unwrap() - 0.55556).abs() < 1e-5);
    }

    #[test]
    fn ranking_ties_are_lexicographic() {
        let r = RankedPredictions::from_scores(&[(2, 0), (0, 5), (1, 1)], &[0.5, 0.5, 0.9], |_| false).unwrap();
        let order: Vec<Edge> = r.items().iter().map(|i| i.pair).collect();
        assert_eq!(order, vec![(1, 1), (0, 5), (2, 0)]);
    }

    #[test]
    fn t_test_degenerate_inputs() {
        assert!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn t_test_direct_formula() {
        // differences (1,1,1,1,3): mean 1.4, sd sqrt(0.8), se = sd / sqrt(5)
        let a = [2.0, 3.0, 4.0, 5.0, 9.0];
        let b = [1.0, 2.0, 3.0, 4.0, 6.0];
        let t = paired_t_test(&a, &b).unwrap();
        let expected = 1.4 / (0.8f64.sqrt() / 5f64.sqrt());
        assert!((t.t_stat - expected).abs() < 1e-12);
        let swapped = paired_t_test(&b, &a).unwrap();
        assert_eq!(swapped.t_stat, -t.t_stat);
        assert!((swapped.p_value - t.p_value).abs() < 1e-15);
        assert!(t.p_value > 0.0 && t.p_value < 0.05);
    }
}
