//! Textual interest features.
//!
//! Users' activity documents are scored with TF-IDF; the top words over the
//! whole history (long-term) and over the most recent slice (short-term)
//! are mapped through word vectors and concatenated into `w_u`.

mod word2vec;

pub use word2vec::{train_word_embeddings, SkipGramConfig, WordEmbeddingTable};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Reserved token for padding scarce keyword lists; maps to a zero vector.
pub const PAD_TOKEN: &str = "<pad>";

/// Lowercases, splits on whitespace, and strips leading/trailing punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub user: u64,
    pub timestamp: i64,
    /// `None` for untagged (`-`) activity.
    pub topic: Option<String>,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(user: u64, timestamp: i64, topic: Option<&str>, text: &str) -> Self {
        Self {
            user,
            timestamp,
            topic: topic.map(str::to_owned),
            tokens: tokenize(text),
        }
    }
}

/// Document collection with vocabulary and document frequencies.
///
/// Documents without tokens are dropped at construction. Vocabulary indices
/// follow lexicographic word order.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    doc_tokens: Vec<Vec<usize>>,
    vocabulary: BTreeMap<String, usize>,
    words: Vec<String>,
    doc_freq: Vec<usize>,
    by_user: BTreeMap<u64, Vec<usize>>,
    topics: Vec<String>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        let documents: Vec<Document> = documents.into_iter().filter(|d| !d.tokens.is_empty()).collect();
        let words: Vec<String> = documents
            .iter()
            .flat_map(|d| d.tokens.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let vocabulary: BTreeMap<String, usize> =
            words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let mut doc_freq = vec![0usize; words.len()];
        let mut doc_tokens = Vec::with_capacity(documents.len());
        let mut by_user: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut topics = BTreeSet::new();
        for (j, d) in documents.iter().enumerate() {
            let ids: Vec<usize> = d.tokens.iter().map(|t| vocabulary[t]).collect();
            for w in ids.iter().copied().collect::<BTreeSet<_>>() {
                doc_freq[w] += 1;
            }
            doc_tokens.push(ids);
            by_user.entry(d.user).or_default().push(j);
            if let Some(t) = &d.topic {
                topics.insert(t.clone());
            }
        }
        Self {
            documents,
            doc_tokens,
            vocabulary,
            words,
            doc_freq,
            by_user,
            topics: topics.into_iter().collect(),
        }
    }

    /// `M`, the number of documents.
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub(crate) fn token_ids(&self, doc: usize) -> &[usize] {
        &self.doc_tokens[doc]
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.vocabulary.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// `m(i)`, the number of documents containing word `i`.
    pub fn document_frequency(&self, word: usize) -> Option<usize> {
        self.doc_freq.get(word).copied()
    }

    /// Distinct non-empty topic tags, sorted.
    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn user_documents(&self, user: u64) -> &[usize] {
        self.by_user.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn users(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_user.keys().copied()
    }

    /// Term frequency of `word` in document `doc`.
    pub fn tf(&self, word: usize, doc: usize) -> Result<f64> {
        let tokens = self
            .doc_tokens
            .get(doc)
            .ok_or_else(|| Error::invalid(format!("document {doc} out of range")))?;
        if tokens.is_empty() {
            return Err(Error::invalid(format!("document {doc} is empty")));
        }
        let hits = tokens.iter().filter(|t| **t == word).count();
        Ok(hits as f64 / tokens.len() as f64)
    }

    /// `ln(M / m(i))`.
    pub fn idf(&self, word: usize) -> Result<f64> {
        let m = self
            .document_frequency(word)
            .ok_or_else(|| Error::invalid(format!("word index {word} not in vocabulary")))?;
        Ok((self.len() as f64 / m as f64).ln())
    }

    pub fn tf_idf(&self, word: usize, doc: usize) -> Result<f64> {
        Ok(self.tf(word, doc)? * self.idf(word)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Long,
    Short,
}

/// Top `w` keywords for `user` in the given window.
///
/// The window's documents are merged per topic tag; each word's score is
/// its TF within the merged document times its corpus IDF, taking the
/// maximum across tags. When the corpus has tags, each tag contributes up to
/// `w / #tags` words from its own merged document (remainder slots go to the
/// first tags). Remaining slots take the best unselected words overall.
/// Only words with positive score are eligible; ties break
/// lexicographically; the list is padded with [`PAD_TOKEN`] to length `w`.
pub fn extract_top_words(user: u64, corpus: &Corpus, window: Window, w: usize, short_fraction: f64) -> Result<Vec<String>> {
    if w == 0 {
        return Err(Error::invalid("keyword count W must be at least 1"));
    }
    if !(short_fraction > 0.0 && short_fraction <= 1.0) {
        return Err(Error::invalid(format!("short_fraction {short_fraction} not in (0, 1]")));
    }
    let mut docs: Vec<usize> = corpus.user_documents(user).to_vec();
    // Canonical order so the result does not depend on input order.
    docs.sort_by(|a, b| {
        let (da, db) = (&corpus.documents[*a], &corpus.documents[*b]);
        (da.timestamp, &da.topic, &da.tokens).cmp(&(db.timestamp, &db.topic, &db.tokens))
    });
    if window == Window::Short && !docs.is_empty() {
        let keep = ((short_fraction * docs.len() as f64 - 1e-9).ceil() as usize).clamp(1, docs.len());
        docs.drain(..docs.len() - keep);
    }

    let mut groups: BTreeMap<Option<&str>, HashMap<usize, usize>> = BTreeMap::new();
    for &d in &docs {
        let counts = groups.entry(corpus.documents[d].topic.as_deref()).or_default();
        for &t in corpus.token_ids(d) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut group_scores: BTreeMap<Option<&str>, Vec<(usize, f64)>> = BTreeMap::new();
    let mut best: HashMap<usize, f64> = HashMap::new();
    for (tag, counts) in &groups {
        let total: usize = counts.values().sum();
        let mut scored = Vec::with_capacity(counts.len());
        for (&word, &c) in counts {
            let score = c as f64 / total as f64 * corpus.idf(word)?;
            scored.push((word, score));
            let b = best.entry(word).or_insert(score);
            *b = b.max(score);
        }
        group_scores.insert(*tag, scored);
    }

    let rank = |scored: &mut Vec<(usize, f64)>| {
        scored.retain(|(_, s)| *s > 0.0);
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| corpus.word(a.0).cmp(corpus.word(b.0))));
    };

    let mut selected: Vec<usize> = Vec::with_capacity(w);
    let tags = corpus.topics();
    if !tags.is_empty() {
        let base = w / tags.len();
        let extra = w % tags.len();
        for (k, tag) in tags.iter().enumerate() {
            let quota = base + usize::from(k < extra);
            let Some(scored) = group_scores.get_mut(&Some(tag.as_str())) else {
                continue;
            };
            rank(scored);
            let picks: Vec<usize> = scored
                .iter()
                .map(|(word, _)| *word)
                .filter(|word| !selected.contains(word))
                .take(quota)
                .collect();
            selected.extend(picks);
        }
    }
    let mut overall: Vec<(usize, f64)> = best.into_iter().collect();
    rank(&mut overall);
    for (word, _) in overall {
        if selected.len() >= w {
            break;
        }
        if !selected.contains(&word) {
            selected.push(word);
        }
    }
    let mut out: Vec<String> = selected.into_iter().map(|i| corpus.word(i).to_owned()).collect();
    out.resize(w, PAD_TOKEN.to_owned());
    Ok(out)
}

/// Per-user keyword lists and their concatenated vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTextProfile {
    pub user: u64,
    pub long_words: Vec<String>,
    pub short_words: Vec<String>,
    pub w_long: Vec<f64>,
    pub w_short: Vec<f64>,
}

impl UserTextProfile {
    /// `w_u = w_short ++ w_long`.
    pub fn w_u(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w_short.len() + self.w_long.len());
        v.extend_from_slice(&self.w_short);
        v.extend_from_slice(&self.w_long);
        v
    }

    pub fn dim(&self) -> usize {
        self.w_short.len() + self.w_long.len()
    }
}

pub fn assemble_profile(user: u64, table: &WordEmbeddingTable, long_words: &[String], short_words: &[String]) -> Result<UserTextProfile> {
    if long_words.len() != short_words.len() {
        return Err(Error::invalid(format!(
            "long and short keyword lists differ in length ({} vs {})",
            long_words.len(),
            short_words.len()
        )));
    }
    let concat = |words: &[String]| -> Vec<f64> {
        words.iter().flat_map(|w| table.vector_or_zero(w)).collect()
    };
    Ok(UserTextProfile {
        user,
        long_words: long_words.to_vec(),
        short_words: short_words.to_vec(),
        w_long: concat(long_words),
        w_short: concat(short_words),
    })
}

/// Builds the long/short profile of every requested user.
pub fn build_profiles(users: &[u64], corpus: &Corpus, table: &WordEmbeddingTable, w: usize, short_fraction: f64) -> Result<Vec<UserTextProfile>> {
    users
        .iter()
        .map(|&u| {
            let long = extract_top_words(u, corpus, Window::Long, w, short_fraction)?;
            let short = extract_top_words(u, corpus, Window::Short, w, short_fraction)?;
            assemble_profile(u, table, &long, &short)
        })
        .collect()
}

/// Parses `user<TAB>timestamp<TAB>topic<TAB>text...` lines.
pub fn parse_activity_records(reader: impl BufRead, label: &Path) -> Result<Vec<Document>> {
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
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let user = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| parse_err(format!("invalid user id {:?}", fields[0])))?;
        let timestamp = fields[1]
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(format!("invalid timestamp {:?}", fields[1])))?;
        let tag = fields[2].trim();
        let topic = (tag != "-" && !tag.is_empty()).then_some(tag);
        out.push(Document::new(user, timestamp, topic, &fields[3].replace('\t', " ")));
    }
    Ok(out)
}

pub fn read_activity_file(path: &Path) -> Result<Vec<Document>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_activity_records(std::io::BufReader::new(f), path)
}

pub fn write_activity_line(mut w: impl Write, user: u64, timestamp: i64, topic: Option<&str>, text: &str) -> std::io::Result<()> {
    writeln!(w, "{user}\t{timestamp}\t{}\t{text}", topic.unwrap_or("-"))
}
