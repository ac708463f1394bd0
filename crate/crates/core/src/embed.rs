//! Static word embeddings trained with skip-gram + negative sampling on
//! the pretraining corpus. Stands in for pretrained FastText vectors as
//! the resolver's text representation; a text embeds as the mean of its
//! known word vectors.

use crate::rng::Rng;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedError {
    EmptyText,
    EmptyCorpus,
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::EmptyText => write!(f, "cannot embed empty text"),
            EmbedError::EmptyCorpus => write!(f, "embedding corpus is empty"),
            EmbedError::DimensionMismatch { expected, got } => {
                write!(f, "vector has dim {got}, table dim is {expected}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    /// row-major, one row per word
    vectors: Vec<f32>,
}

/// Mean of the known-word vectors of a text. `degenerate` marks a text
/// whose words were all unknown (zero vector).
#[derive(Clone, Debug, PartialEq)]
pub struct MeanVector {
    pub vector: Vec<f32>,
    pub degenerate: bool,
}

impl EmbeddingTable {
    pub fn from_rows(dim: usize, words: Vec<String>, vectors: Vec<f32>) -> Result<Self, EmbedError> {
        if vectors.len() != words.len() * dim {
            return Err(EmbedError::DimensionMismatch {
                expected: words.len() * dim,
                got: vectors.len(),
            });
        }
        assert!(vectors.iter().all(|v| v.is_finite()), "non-finite embedding");
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            index.insert(w.clone(), i);
        }
        Ok(EmbeddingTable {
            dim,
            words,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Mean of known-word vectors; unknown words are skipped, fully
    /// unknown text yields the zero vector with the degenerate flag set.
    pub fn mean_vector(&self, text: &str) -> Result<MeanVector, EmbedError> {
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect();
        if words.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f32; self.dim];
        let mut known = 0usize;
        for w in &words {
            if let Some(v) = self.vector(w) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                known += 1;
            }
        }
        if known == 0 {
            return Ok(MeanVector {
                vector: acc,
                degenerate: true,
            });
        }
        for a in acc.iter_mut() {
            *a /= known as f32;
        }
        Ok(MeanVector {
            vector: acc,
            degenerate: false,
        })
    }

    /// Uniform scaling of every vector; cosine resolution must be
    /// invariant to this (argmax property tests rely on it).
    pub fn scaled(&self, factor: f32) -> Self {
        let mut t = self.clone();
        for v in t.vectors.iter_mut() {
            *v *= factor;
        }
        t
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SkipGramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Frequent-word subsampling threshold; tokens with corpus frequency f
    /// are kept with probability sqrt(t/f) when f > t. Zero disables.
    pub subsample: f64,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            dim: 32,
            window: 2,
            negatives: 5,
            epochs: 20,
            learning_rate: 0.05,
            subsample: 3e-3,
        }
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

/// Skip-gram with negative sampling over a line corpus. Deterministic per
/// seed; single-threaded. The input vectors become the table.
pub fn train_skipgram(
    corpus: &[String],
    params: SkipGramParams,
    seed: u64,
) -> Result<EmbeddingTable, EmbedError> {
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let lines: Vec<Vec<String>> = corpus
        .iter()
        .map(|l| l.split_whitespace().map(|w| w.to_lowercase()).collect())
        .collect();

    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for line in &lines {
        for w in line {
            vocab.insert(w.clone());
        }
    }
    if vocab.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let words: Vec<String> = vocab.into_iter().collect();
    let index: BTreeMap<&str, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let n = words.len();
    let d = params.dim;

    // unigram^0.75 cumulative table for negative sampling
    let mut counts = vec![0u64; n];
    for line in &lines {
        for w in line {
            counts[index[w.as_str()]] += 1;
        }
    }
    let mut cumulative = vec![0.0f64; n];
    let mut acc = 0.0f64;
    for (i, &c) in counts.iter().enumerate() {
        acc += libm::pow(c as f64, 0.75);
        cumulative[i] = acc;
    }

    let root = Rng::new(seed);

    // frequent-word subsampling applied to the token stream before
    // windows are formed, standard word2vec style
    let total_tokens: u64 = counts.iter().sum();
    let mut sub_rng = root.substream("embed/subsample");
    let keep = |id: usize, rng: &mut Rng| -> bool {
        if params.subsample <= 0.0 {
            return true;
        }
        let f = counts[id] as f64 / total_tokens as f64;
        if f <= params.subsample {
            return true;
        }
        rng.next_f64() < libm::sqrt(params.subsample / f)
    };

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for line in &lines {
        let ids: Vec<usize> = line
            .iter()
            .map(|w| index[w.as_str()])
            .filter(|&id| keep(id, &mut sub_rng))
            .collect();
        for (i, &center) in ids.iter().enumerate() {
            let lo = i.saturating_sub(params.window);
            let hi = (i + params.window + 1).min(ids.len());
            for (j, &ctx) in ids.iter().enumerate().take(hi).skip(lo) {
                if i != j {
                    pairs.push((center as u32, ctx as u32));
                }
            }
        }
    }
    let mut init = root.substream("embed/init");
    let span = 0.5 / d as f32;
    let mut input: Vec<f32> = (0..n * d)
        .map(|_| init.uniform(-span as f64, span as f64) as f32)
        .collect();
    let mut output: Vec<f32> = vec![0.0; n * d];

    let mut shuffle_rng = root.substream("embed/shuffle");
    let mut neg_rng = root.substream("embed/negatives");
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..params.epochs {
        let lr = (params.learning_rate * (1.0 - epoch as f64 / params.epochs as f64))
            .max(params.learning_rate * 0.1) as f32;
        shuffle_rng.shuffle(&mut order);
        for &pi in &order {
            let (center, pos) = pairs[pi];
            let c0 = center as usize * d;
            let mut grad_center = vec![0.0f32; d];
            for k in 0..=params.negatives {
                let (target, label) = if k == 0 {
                    (pos as usize, 1.0f32)
                } else {
                    let r = neg_rng.next_f64() * acc;
                    let t = cumulative.partition_point(|&x| x < r).min(n - 1);
                    if t == pos as usize {
                        continue;
                    }
                    (t, 0.0f32)
                };
                let t0 = target * d;
                let mut score = 0.0f32;
                for j in 0..d {
                    score += input[c0 + j] * output[t0 + j];
                }
                let g = (sigmoid(score) - label) * lr;
                for j in 0..d {
                    grad_center[j] += g * output[t0 + j];
                    output[t0 + j] -= g * input[c0 + j];
                }
            }
            for j in 0..d {
                input[c0 + j] -= grad_center[j];
            }
        }
    }

    // unit-normalize rows so frequent words cannot dominate text means
    for row in input.chunks_mut(d) {
        let n = libm::sqrtf(row.iter().map(|&x| x * x).sum::<f32>());
        if n > 0.0 {
            for x in row.iter_mut() {
                *x /= n;
            }
        }
    }

    EmbeddingTable::from_rows(d, words, input)
}
