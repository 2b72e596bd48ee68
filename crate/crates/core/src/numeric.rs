//! Social influence and weak-link features from an interaction log.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InteractionKind {
    Endorse,
    Vote,
    Comment,
    FollowQuestion,
    Answer,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 5] = [
        InteractionKind::Endorse,
        InteractionKind::Vote,
        InteractionKind::Comment,
        InteractionKind::FollowQuestion,
        InteractionKind::Answer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Endorse => "endorse",
            InteractionKind::Vote => "vote",
            InteractionKind::Comment => "comment",
            InteractionKind::FollowQuestion => "follow_question",
            InteractionKind::Answer => "answer",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InteractionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown interaction kind {s:?}"))
    }
}

/// Width of the social-influence vector (one slot per interaction kind).
pub const SOCIAL_DIM: usize = InteractionKind::ALL.len();
/// Width of the weak-link vector: quantity and quality.
pub const WEAK_LINK_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub src: u64,
    pub dst: u64,
    pub kind: InteractionKind,
    pub quality: u64,
    pub timestamp: i64,
}

/// Interactions up to the feature cutoff, indexed for lookup.
#[derive(Debug, Clone, Default)]
pub struct InteractionLog {
    records: Vec<Interaction>,
    inbound: HashMap<u64, [u64; SOCIAL_DIM]>,
    pairs: HashMap<(u64, u64), (u64, u64)>,
}

impl InteractionLog {
    /// Keeps records with `timestamp <= cutoff` and `src != dst`.
    pub fn new(records: impl IntoIterator<Item = Interaction>, cutoff: i64) -> Self {
        let mut log = Self::default();
        for r in records {
            if r.timestamp > cutoff || r.src == r.dst {
                continue;
            }
            log.inbound.entry(r.dst).or_insert([0; SOCIAL_DIM])[r.kind.index()] += 1;
            let pair = log.pairs.entry((r.src, r.dst)).or_insert((0, 0));
            pair.0 += 1;
            pair.1 += r.quality;
            log.records.push(r);
        }
        log
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `s_u[k] = ln(1 + #inbound records of kind k)`.
    pub fn social_influence(&self, user: u64) -> [f64; SOCIAL_DIM] {
        let counts = self.inbound.get(&user).copied().unwrap_or([0; SOCIAL_DIM]);
        counts.map(|c| (c as f64).ln_1p())
    }

    /// `l_uq = (ln(1 + #records u→q), ln(1 + sum of their quality))`.
    pub fn weak_link(&self, u: u64, q: u64) -> Result<[f64; WEAK_LINK_DIM]> {
        if u == q {
            return Err(Error::invalid(format!("weak link of user {u} with itself")));
        }
        let (count, quality) = self.pairs.get(&(u, q)).copied().unwrap_or((0, 0));
        Ok([(count as f64).ln_1p(), (quality as f64).ln_1p()])
    }

    /// Ordered pairs with at least one interaction.
    pub fn interacting_pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pairs.keys().copied()
    }
}

/// Precomputed features keyed by graph node index.
#[derive(Debug, Clone)]
pub struct NumericFeatures {
    social: Vec<[f64; SOCIAL_DIM]>,
    node_ids: Vec<u64>,
    log: InteractionLog,
}

impl NumericFeatures {
    /// `node_ids[i]` is the external id of node `i`.
    pub fn new(log: InteractionLog, node_ids: &[u64]) -> Self {
        Self {
            social: node_ids.iter().map(|id| log.social_influence(*id)).collect(),
            node_ids: node_ids.to_vec(),
            log,
        }
    }

    pub fn social_influence(&self, node: usize) -> &[f64; SOCIAL_DIM] {
        &self.social[node]
    }

    pub fn weak_link(&self, u: usize, q: usize) -> Result<[f64; WEAK_LINK_DIM]> {
        self.log.weak_link(self.node_ids[u], self.node_ids[q])
    }

    /// `s_q ++ l_uq` for a pair of node indices.
    pub fn pair_vector(&self, u: usize, q: usize) -> Result<Vec<f64>> {
        let mut v = self.social[q].to_vec();
        v.extend_from_slice(&self.weak_link(u, q)?);
        Ok(v)
    }

    pub fn log(&self) -> &InteractionLog {
        &self.log
    }
}

/// Parses `src<TAB>dst<TAB>kind<TAB>quality<TAB>timestamp` lines.
pub fn parse_interaction_records(reader: impl BufRead, label: &Path) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: label.to_path_buf(),
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(parse_err(format!("expected 5 tab-separated fields, got {}", f.len())));
        }
        let uint = |s: &str, what: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| parse_err(format!("invalid {what} {s:?}")))
        };
        let record = Interaction {
            src: uint(f[0], "src")?,
            dst: uint(f[1], "dst")?,
            kind: f[2].trim().parse().map_err(parse_err)?,
            quality: uint(f[3], "quality")?,
            timestamp: f[4]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid timestamp {:?}", f[4])))?,
        };
        if record.src == record.dst {
            return Err(parse_err("interaction source equals destination".into()));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_interaction_file(path: &Path) -> Result<Vec<Interaction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interaction_records(std::io::BufReader::new(f), path)
}

pub fn write_interactions(mut w: impl Write, records: &[Interaction]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.src, r.dst, r.kind, r.quality, r.timestamp)?;
    }
    Ok(())
}
