//! Experiment configuration: `key = value` lines with `#` comments.
//!
//! Unknown keys are errors. Command-line overrides go through the same
//! [`ExperimentConfig::set`] path as file lines, and [`ExperimentConfig::to_lines`]
//! echoes the fully resolved configuration in a fixed key order.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::datagen::SynthConfig;
use crate::error::{Error, Result};
use crate::gcn::GcnConfig;
use crate::predictor::AblationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    CommonNeighbors,
    PageRank,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::CommonNeighbors => "cn",
            Baseline::PageRank => "pagerank",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cn" => Ok(Baseline::CommonNeighbors),
            "pagerank" | "pr" => Ok(Baseline::PageRank),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Input files; when all three are unset a synthetic dataset is generated.
    pub edges: Option<PathBuf>,
    pub activities: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub cutoff_t: i64,
    pub cutoff_t_prime: i64,
    /// Keywords per interest window (W).
    pub keywords: usize,
    /// Word-vector dimension (d).
    pub word_dim: usize,
    pub short_fraction: f64,
    pub w2v_epochs: usize,
    pub w2v_window: usize,
    pub w2v_negatives: usize,
    pub gcn_input: usize,
    pub gcn_hidden: usize,
    pub gcn_output: usize,
    pub mlp_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub repeats: usize,
    pub k: Vec<usize>,
    pub variant: AblationConfig,
    pub baselines: Vec<Baseline>,
    pub auc_samples: usize,
    pub test_fraction: f64,
    pub neg_per_pos: usize,
    pub pagerank_damping: f64,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            edges: None,
            activities: None,
            interactions: None,
            cutoff_t: synth.cutoff_t,
            cutoff_t_prime: synth.cutoff_t_prime,
            keywords: 20,
            word_dim: 16,
            short_fraction: 0.1,
            w2v_epochs: 5,
            w2v_window: 5,
            w2v_negatives: 5,
            gcn_input: 64,
            gcn_hidden: 64,
            gcn_output: 16,
            mlp_hidden: vec![64, 32],
            learning_rate: 0.01,
            l2_penalty: 5e-4,
            dropout: 0.5,
            epochs: 200,
            seed: 42,
            repeats: 1,
            k: vec![500],
            variant: AblationConfig::FULL,
            baselines: vec![Baseline::CommonNeighbors, Baseline::PageRank],
            auc_samples: 100_000,
            test_fraction: 0.2,
            neg_per_pos: 1,
            pagerank_damping: 0.85,
            synth,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    if items.is_empty() {
        return "none".into();
    }
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn path_value(value: &str, base: Option<&Path>) -> Option<PathBuf> {
    if value.is_empty() || value == "-" {
        return None;
    }
    let p = PathBuf::from(value);
    Some(match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    })
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("-".into(), |p| p.display().to_string())
}

impl ExperimentConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path.parent())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set_with_base(key.trim(), value.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, None)
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "edges" => self.edges = path_value(value, base),
            "activities" => self.activities = path_value(value, base),
            "interactions" => self.interactions = path_value(value, base),
            "t" => self.cutoff_t = parse(key, value)?,
            "t_prime" => self.cutoff_t_prime = parse(key, value)?,
            "keywords" => self.keywords = parse(key, value)?,
            "word_dim" => self.word_dim = parse(key, value)?,
            "short_fraction" => self.short_fraction = parse(key, value)?,
            "w2v_epochs" => self.w2v_epochs = parse(key, value)?,
            "w2v_window" => self.w2v_window = parse(key, value)?,
            "w2v_negatives" => self.w2v_negatives = parse(key, value)?,
            "gcn_input" => self.gcn_input = parse(key, value)?,
            "gcn_hidden" => self.gcn_hidden = parse(key, value)?,
            "gcn_output" => self.gcn_output = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse_list(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "l2_penalty" => self.l2_penalty = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "k" => self.k = parse_list(key, value)?,
            "variant" => self.variant = value.parse()?,
            "baselines" => self.baselines = parse_list(key, value)?,
            "auc_samples" => self.auc_samples = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "neg_per_pos" => self.neg_per_pos = parse(key, value)?,
            "pagerank_damping" => self.pagerank_damping = parse(key, value)?,
            "synth.nodes" => s.nodes = parse(key, value)?,
            "synth.communities" => s.communities = parse(key, value)?,
            "synth.p_in" => s.p_in = parse(key, value)?,
            "synth.p_out" => s.p_out = parse(key, value)?,
            "synth.vocab_per_community" => s.vocab_per_community = parse(key, value)?,
            "synth.docs_per_user" => s.docs_per_user = parse(key, value)?,
            "synth.words_per_doc" => s.words_per_doc = parse(key, value)?,
            "synth.hot_topic_count" => s.hot_topic_count = parse(key, value)?,
            "synth.interaction_rate" => s.interaction_rate = parse(key, value)?,
            "synth.new_link_weak_link_bias" => s.new_link_weak_link_bias = parse(key, value)?,
            "synth.seed" => s.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_lines(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        vec![
            ("edges", show_path(&self.edges)),
            ("activities", show_path(&self.activities)),
            ("interactions", show_path(&self.interactions)),
            ("t", self.cutoff_t.to_string()),
            ("t_prime", self.cutoff_t_prime.to_string()),
            ("keywords", self.keywords.to_string()),
            ("word_dim", self.word_dim.to_string()),
            ("short_fraction", self.short_fraction.to_string()),
            ("w2v_epochs", self.w2v_epochs.to_string()),
            ("w2v_window", self.w2v_window.to_string()),
            ("w2v_negatives", self.w2v_negatives.to_string()),
            ("gcn_input", self.gcn_input.to_string()),
            ("gcn_hidden", self.gcn_hidden.to_string()),
            ("gcn_output", self.gcn_output.to_string()),
            ("mlp_hidden", join(&self.mlp_hidden)),
            ("learning_rate", self.learning_rate.to_string()),
            ("l2_penalty", self.l2_penalty.to_string()),
            ("dropout", self.dropout.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("repeats", self.repeats.to_string()),
            ("k", join(&self.k)),
            ("variant", self.variant.to_string()),
            ("baselines", join(&self.baselines.iter().map(|b| b.name()).collect::<Vec<_>>())),
            ("auc_samples", self.auc_samples.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("neg_per_pos", self.neg_per_pos.to_string()),
            ("pagerank_damping", self.pagerank_damping.to_string()),
            ("synth.nodes", s.nodes.to_string()),
            ("synth.communities", s.communities.to_string()),
            ("synth.p_in", s.p_in.to_string()),
            ("synth.p_out", s.p_out.to_string()),
            ("synth.vocab_per_community", s.vocab_per_community.to_string()),
            ("synth.docs_per_user", s.docs_per_user.to_string()),
            ("synth.words_per_doc", s.words_per_doc.to_string()),
            ("synth.hot_topic_count", s.hot_topic_count.to_string()),
            ("synth.interaction_rate", s.interaction_rate.to_string()),
            ("synth.new_link_weak_link_bias", s.new_link_weak_link_bias.to_string()),
            ("synth.seed", s.seed.to_string()),
        ]
    }

    /// First 12 hex digits of the SHA-256 of the resolved config.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.to_lines() {
            h.update(format!("{k} = {v}\n"));
        }
        h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn uses_synthetic_data(&self) -> bool {
        self.edges.is_none() && self.activities.is_none() && self.interactions.is_none()
    }

    /// Synthetic generator settings with the experiment's cutoffs applied.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            cutoff_t: self.cutoff_t,
            cutoff_t_prime: self.cutoff_t_prime,
            ..self.synth.clone()
        }
    }

    pub fn gcn_config(&self) -> GcnConfig {
        GcnConfig {
            input_dim: self.gcn_input,
            hidden_dim: self.gcn_hidden,
            output_dim: self.gcn_output,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let given = [&self.edges, &self.activities, &self.interactions]
            .iter()
            .filter(|p| p.is_some())
            .count();
        if given != 0 && given != 3 {
            return bad("edges, activities and interactions must be given together".into());
        }
        if self.cutoff_t >= self.cutoff_t_prime {
            return bad(format!("t ({}) must precede t_prime ({})", self.cutoff_t, self.cutoff_t_prime));
        }
        if self.k.is_empty() || self.k.contains(&0) || self.k.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("k list {:?} must be non-empty, positive and ascending", self.k));
        }
        if self.repeats == 0 || self.epochs == 0 || self.w2v_epochs == 0 {
            return bad("repeats, epochs and w2v_epochs must be at least 1".into());
        }
        if self.keywords == 0 || self.word_dim < 2 || self.auc_samples == 0 || self.neg_per_pos == 0 {
            return bad("keywords, auc_samples and neg_per_pos must be positive; word_dim at least 2".into());
        }
        if [self.gcn_input, self.gcn_hidden, self.gcn_output].contains(&0)
            || self.mlp_hidden.is_empty()
            || self.mlp_hidden.contains(&0)
        {
            return bad("layer widths must be positive and mlp_hidden non-empty".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} not in (0, 1)", self.test_fraction));
        }
        if !(self.short_fraction > 0.0 && self.short_fraction <= 1.0) {
            return bad(format!("short_fraction {} not in (0, 1]", self.short_fraction));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.l2_penalty < 0.0 {
            return bad("learning_rate must be positive and l2_penalty non-negative".into());
        }
        self.variant.validate()?;
        if self.uses_synthetic_data() {
            self.synth_config().validate()?;
        }
        Ok(())
    }
}
