//! Planted-community synthetic datasets.
//!
//! Users are assigned to communities round-robin. Snapshot-`t` edges follow
//! a directed stochastic block model with `(p_in, p_out)`. A sparse set of
//! non-adjacent pairs receives interaction records (weak links); new links at
//! `t'` use the same block probabilities plus `new_link_weak_link_bias` for
//! pairs that interacted. Text is drawn from per-community vocabularies, with
//! the latest 10% of each user's documents also drawing from a shared
//! hot-topic pool.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{write_edge_records, EdgeRecord};
use crate::numeric::{write_interactions, Interaction, InteractionKind};
use crate::text::write_activity_line;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub vocab_per_community: usize,
    pub docs_per_user: usize,
    pub words_per_doc: usize,
    pub hot_topic_count: usize,
    /// Probability that an intra-community non-adjacent pair interacts;
    /// inter-community pairs use `interaction_rate * p_out / p_in`.
    pub interaction_rate: f64,
    pub new_link_weak_link_bias: f64,
    pub cutoff_t: i64,
    pub cutoff_t_prime: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 1000,
            communities: 4,
            p_in: 0.02,
            p_out: 0.002,
            vocab_per_community: 40,
            docs_per_user: 20,
            words_per_doc: 12,
            hot_topic_count: 20,
            interaction_rate: 0.05,
            new_link_weak_link_bias: 0.3,
            cutoff_t: 100,
            cutoff_t_prime: 200,
            seed: 7,
        }
    }
}

/// Words a user favours inside its community vocabulary.
const USER_VOCAB: usize = 12;
/// Words shared by every community.
const BACKGROUND_VOCAB: usize = 30;
const TOPIC_TAGS: [&str; 2] = ["topic-a", "topic-b"];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.communities == 0 || self.nodes < self.communities {
            return bad(format!(
                "need nodes >= communities >= 1 (got {} and {})",
                self.nodes, self.communities
            ));
        }
        for (name, v) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("interaction_rate", self.interaction_rate),
            ("new_link_weak_link_bias", self.new_link_weak_link_bias),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.p_in <= self.p_out {
            return bad(format!("p_in ({}) must exceed p_out ({})", self.p_in, self.p_out));
        }
        if self.vocab_per_community == 0 || self.docs_per_user == 0 || self.words_per_doc == 0 {
            return bad("vocabulary, document count and document length must be positive".into());
        }
        if self.cutoff_t < 1 || self.cutoff_t_prime <= self.cutoff_t {
            return bad(format!(
                "cutoffs must satisfy 1 <= t < t' (got {} and {})",
                self.cutoff_t, self.cutoff_t_prime
            ));
        }
        Ok(())
    }

    pub fn community_of(&self, user: usize) -> usize {
        user % self.communities
    }

    fn interaction_prob(&self, same: bool) -> f64 {
        if same {
            self.interaction_rate
        } else {
            self.interaction_rate * self.p_out / self.p_in
        }
    }

    fn link_prob(&self, same: bool) -> f64 {
        if same {
            self.p_in
        } else {
            self.p_out
        }
    }

    /// Ordered intra- and inter-community pair counts.
    pub fn pair_counts(&self) -> (f64, f64) {
        let n = self.nodes as f64;
        let intra: f64 = (0..self.communities)
            .map(|c| {
                let s = ((self.nodes - c).div_ceil(self.communities)) as f64;
                s * (s - 1.0)
            })
            .sum();
        (intra, n * (n - 1.0) - intra)
    }

    /// Expected fraction of snapshot-`t` edges that are intra-community.
    pub fn expected_intra_fraction(&self) -> f64 {
        let (intra, inter) = self.pair_counts();
        let a = self.p_in * intra;
        a / (a + self.p_out * inter)
    }

    /// Expected number of new links.
    pub fn expected_new_links(&self) -> f64 {
        let (intra, inter) = self.pair_counts();
        [(true, intra), (false, inter)]
            .into_iter()
            .map(|(same, pairs)| {
                let free = pairs * (1.0 - self.link_prob(same));
                let p_int = self.interaction_prob(same);
                let boosted = (self.link_prob(same) + self.new_link_weak_link_bias).min(1.0);
                free * ((1.0 - p_int) * self.link_prob(same) + p_int * boosted)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub user: u64,
    pub timestamp: i64,
    pub topic: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    /// Snapshot-`t` edges followed by new links.
    pub edges: Vec<EdgeRecord>,
    pub activities: Vec<ActivityRecord>,
    pub interactions: Vec<Interaction>,
    /// Community of each user.
    pub communities: Vec<usize>,
    /// Ordered pairs that received interactions.
    pub interacted: Vec<(u64, u64)>,
}

impl SynthDataset {
    pub fn snapshot_edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.iter().filter(|e| e.timestamp <= self.config.cutoff_t)
    }

    pub fn new_links(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.iter().filter(|e| e.timestamp > self.config.cutoff_t)
    }
}

fn geometric(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    let mut k = 0;
    while rng.gen::<f64>() >= p {
        k += 1;
    }
    k
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    if config.expected_new_links() <= 0.0 {
        return Err(Error::Config("rates give zero expected new links".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.nodes;
    let t = config.cutoff_t;
    let t2 = config.cutoff_t_prime;

    let mut edges = Vec::new();
    let mut new_links = Vec::new();
    let mut interactions = Vec::new();
    let mut interacted = Vec::new();
    for u in 0..n {
        for q in 0..n {
            if u == q {
                continue;
            }
            let same = config.community_of(u) == config.community_of(q);
            let p = config.link_prob(same);
            if rng.gen::<f64>() < p {
                edges.push(EdgeRecord::new(u as u64, q as u64, rng.gen_range(1..=t)));
                continue;
            }
            let mut p_new = p;
            if rng.gen::<f64>() < config.interaction_prob(same) {
                interacted.push((u as u64, q as u64));
                for _ in 0..1 + geometric(&mut rng, 0.5) {
                    interactions.push(Interaction {
                        src: u as u64,
                        dst: q as u64,
                        kind: InteractionKind::ALL[rng.gen_range(0..InteractionKind::ALL.len())],
                        quality: geometric(&mut rng, 0.25),
                        timestamp: rng.gen_range(1..=t),
                    });
                }
                p_new = (p + config.new_link_weak_link_bias).min(1.0);
            }
            if rng.gen::<f64>() < p_new {
                new_links.push(EdgeRecord::new(u as u64, q as u64, rng.gen_range(t + 1..=t2)));
            }
        }
    }
    if new_links.is_empty() {
        return Err(Error::Data("generated dataset has no new links".into()));
    }
    edges.extend(new_links);

    let activities = generate_text(config, &mut rng);
    Ok(SynthDataset {
        config: config.clone(),
        edges,
        activities,
        interactions,
        communities: (0..n).map(|u| config.community_of(u)).collect(),
        interacted,
    })
}

fn generate_text(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<ActivityRecord> {
    let docs = config.docs_per_user;
    let recent = (docs as f64 * 0.1).ceil() as usize;
    let mut out = Vec::with_capacity(config.nodes * docs);
    for u in 0..config.nodes {
        let c = config.community_of(u);
        let mut own: Vec<usize> = (0..config.vocab_per_community).collect();
        own.shuffle(rng);
        own.truncate(USER_VOCAB.min(config.vocab_per_community));
        for k in 0..docs {
            // Ascending, distinct when t allows.
            let ts = 1 + (k as i64 * (config.cutoff_t - 1)) / docs as i64;
            let is_recent = k >= docs - recent;
            let words: Vec<String> = (0..config.words_per_doc)
                .map(|_| {
                    let r = rng.gen::<f64>();
                    if is_recent && config.hot_topic_count > 0 && r < 0.4 {
                        format!("hot{}", rng.gen_range(0..config.hot_topic_count))
                    } else if r < 0.75 {
                        format!("c{c}w{}", own[rng.gen_range(0..own.len())])
                    } else {
                        format!("common{}", rng.gen_range(0..BACKGROUND_VOCAB))
                    }
                })
                .collect();
            out.push(ActivityRecord {
                user: u as u64,
                timestamp: ts,
                topic: TOPIC_TAGS[rng.gen_range(0..TOPIC_TAGS.len())].to_string(),
                text: words.join(" "),
            });
        }
    }
    out
}

/// Output paths of [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub activities: PathBuf,
    pub interactions: PathBuf,
    pub communities: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            edges: dir.join("edges.tsv"),
            activities: dir.join("activities.tsv"),
            interactions: dir.join("interactions.tsv"),
            communities: dir.join("communities.tsv"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_dataset(data: &SynthDataset, dir: &Path) -> Result<DatasetFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);
    let finish = |path: &Path, w: std::io::Result<BufWriter<File>>| -> Result<()> {
        w.and_then(|mut w| w.flush()).map_err(|e| Error::io(path, e))
    };

    let mut w = create(&files.edges)?;
    let r = write_edge_records(&mut w, &data.edges).map(|_| w);
    finish(&files.edges, r)?;

    let mut w = create(&files.activities)?;
    let r = data
        .activities
        .iter()
        .try_for_each(|a| write_activity_line(&mut w, a.user, a.timestamp, Some(&a.topic), &a.text))
        .map(|_| w);
    finish(&files.activities, r)?;

    let mut w = create(&files.interactions)?;
    let r = write_interactions(&mut w, &data.interactions).map(|_| w);
    finish(&files.interactions, r)?;

    let mut w = create(&files.communities)?;
    let r = data
        .communities
        .iter()
        .enumerate()
        .try_for_each(|(u, c)| writeln!(w, "{u}\t{c}"))
        .map(|_| w);
    finish(&files.communities, r)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            nodes: 120,
            p_in: 0.1,
            p_out: 0.01,
            docs_per_user: 10,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn validation() {
        let bad = [
            SynthConfig { p_in: 0.01, p_out: 0.02, ..small() },
            SynthConfig { communities: 0, ..small() },
            SynthConfig { nodes: 3, communities: 4, ..small() },
            SynthConfig { interaction_rate: 1.5, ..small() },
        ];
        for cfg in bad {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn zero_expected_new_links_rejected() {
        // Every pair is linked at t, so nothing can be new.
        let cfg = SynthConfig {
            nodes: 8,
            communities: 1,
            p_in: 1.0,
            p_out: 0.0,
            ..small()
        };
        assert_eq!(cfg.expected_new_links(), 0.0);
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn no_inter_links_when_p_out_is_zero() {
        let cfg = SynthConfig { p_out: 0.0, ..small() };
        let d = generate(&cfg).unwrap();
        assert!(d
            .edges
            .iter()
            .all(|e| cfg.community_of(e.src as usize) == cfg.community_of(e.dst as usize)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
    }

    #[test]
    fn new_links_disjoint_from_snapshot() {
        let d = generate(&small()).unwrap();
        let old: std::collections::HashSet<_> = d.snapshot_edges().map(|e| (e.src, e.dst)).collect();
        assert!(d.new_links().count() > 0);
        assert!(d.new_links().all(|e| !old.contains(&(e.src, e.dst))));
    }

    #[test]
    fn recent_documents_carry_hot_topics() {
        let d = generate(&small()).unwrap();
        let user0: Vec<_> = d.activities.iter().filter(|a| a.user == 0).collect();
        assert_eq!(user0.len(), 10);
        assert!(user0[..9].iter().all(|a| !a.text.contains("hot")));
        assert!(user0[9].text.contains("hot"));
    }
}
