//! Skip-gram with negative sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};
use crate::tensor::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 5,
            window: 5,
            negatives: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

/// Word vectors indexed by word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    index: BTreeMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

impl WordEmbeddingTable {
    pub fn from_vectors(words: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if words.len() != vectors.len() {
            return Err(Error::invalid("word and vector counts differ"));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("word vectors must be finite with a uniform dimension"));
        }
        let index = words.into_iter().enumerate().map(|(i, w)| (w, i)).collect();
        Ok(Self { dim, index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Vector for `word`, or zeros for unknown words and padding.
    pub fn vector_or_zero(&self, word: &str) -> Vec<f64> {
        self.get(word).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }
}

/// Trains word vectors with skip-gram and negative sampling.
///
/// Single-threaded and fully determined by `config.seed`. Negatives are
/// drawn from the unigram distribution raised to 0.75; a draw equal to the
/// positive context word is skipped.
pub fn train_word_embeddings(corpus: &Corpus, config: &SkipGramConfig) -> Result<WordEmbeddingTable> {
    let vocab = corpus.vocab_size();
    if vocab < 2 {
        return Err(Error::Data(format!(
            "word embeddings need at least 2 vocabulary words, got {vocab}"
        )));
    }
    if config.dim < 2 {
        return Err(Error::Config(format!("embedding dimension {} < 2", config.dim)));
    }
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut counts = vec![0f64; vocab];
    for j in 0..corpus.len() {
        for &t in corpus.token_ids(j) {
            counts[t] += 1.0;
        }
    }
    let mut cumulative = Vec::with_capacity(vocab);
    let mut acc = 0.0;
    for c in &counts {
        acc += c.powf(0.75);
        cumulative.push(acc);
    }
    let total_weight = acc;
    let sample_negative = |rng: &mut ChaCha8Rng| -> usize {
        let x = rng.gen::<f64>() * total_weight;
        cumulative.partition_point(|c| *c <= x).min(vocab - 1)
    };

    let mut input: Vec<f64> = (0..vocab * d)
        .map(|_| (rng.gen::<f64>() - 0.5) / d as f64)
        .collect();
    let mut output = vec![0.0; vocab * d];
    let mut hidden_err = vec![0.0; d];

    let total_tokens: usize = (0..corpus.len()).map(|j| corpus.token_ids(j).len()).sum();
    let total_steps = (config.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;

    for _ in 0..config.epochs {
        for j in 0..corpus.len() {
            let tokens = corpus.token_ids(j);
            for (pos, &center) in tokens.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / total_steps))
                    .max(config.learning_rate * 1e-4);
                processed += 1;
                let reach = rng.gen_range(1..=config.window.max(1));
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(tokens.len() - 1);
                for (ctx_pos, &context) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    hidden_err.iter_mut().for_each(|e| *e = 0.0);
                    let c_row = center * d;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = sample_negative(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let t_row = target * d;
                        let dot: f64 = (0..d).map(|x| input[c_row + x] * output[t_row + x]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for x in 0..d {
                            hidden_err[x] += g * output[t_row + x];
                            output[t_row + x] += g * input[c_row + x];
                        }
                    }
                    for x in 0..d {
                        input[c_row + x] += hidden_err[x];
                    }
                }
            }
        }
    }

    // Exported vectors are input + output ("w + c"), so words that co-occur
    // end up close, not only words that share contexts.
    let vectors: Vec<Vec<f64>> = input
        .chunks(d)
        .zip(output.chunks(d))
        .map(|(i, o)| i.iter().zip(o).map(|(a, b)| a + b).collect())
        .collect();
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("word embedding training diverged".into()));
    }
    WordEmbeddingTable::from_vectors(corpus.words().to_vec(), vectors)
}
