//! Casts generation back to classification: nearest-neighbour search from
//! a generated canonical form to the schema's labels. The shipped scorer
//! is mean-static-embedding cosine; the `Scorer` trait is the extension
//! point for heavier rerankers.

use crate::embed::{EmbedError, EmbeddingTable};
use crate::schema::CanonicalSchema;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolverError {
    EmptyGeneratedText,
    EmptySchema,
    IndexSizeMismatch { index: usize, schema: usize },
}

impl fmt::Display for ResolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolverError::EmptyGeneratedText => write!(f, "generated text is empty"),
            ResolverError::EmptySchema => write!(f, "schema has no entries"),
            ResolverError::IndexSizeMismatch { index, schema } => {
                write!(f, "label index has {index} entries, schema has {schema}")
            }
        }
    }
}

impl From<EmbedError> for ResolverError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyText => ResolverError::EmptyGeneratedText,
            _ => ResolverError::EmptySchema,
        }
    }
}

/// Per-schema-entry mean vectors, unit-normalized (zero vectors kept).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelIndex {
    vectors: Vec<Vec<f32>>,
}

fn norm(v: &[f32]) -> f32 {
    libm::sqrtf(v.iter().map(|&x| x * x).sum::<f32>())
}

fn normalized(mut v: Vec<f32>) -> Vec<f32> {
    let n = norm(&v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    v
}

impl LabelIndex {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }
}

/// Precomputes the mean vector of every canonical form.
pub fn build_index(
    schema: &CanonicalSchema,
    table: &EmbeddingTable,
) -> Result<LabelIndex, ResolverError> {
    if schema.is_empty() {
        return Err(ResolverError::EmptySchema);
    }
    let mut vectors = Vec::with_capacity(schema.len());
    for e in schema.entries() {
        let m = table.mean_vector(&e.canonical)?;
        vectors.push(normalized(m.vector));
    }
    Ok(LabelIndex { vectors })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resolution {
    pub predicted_intent: String,
    pub matched_canonical: String,
    pub similarity: f32,
    pub runner_up_similarity: f32,
    pub margin: f32,
    /// Query embedded to the zero vector (no known words).
    pub degenerate: bool,
}

/// Scores a generated text against every schema label. Higher is closer.
pub trait Scorer {
    fn score(&self, generated: &str, labels: &[&str]) -> Result<ScoreSet, ResolverError>;
}

pub struct ScoreSet {
    pub scores: Vec<f32>,
    pub degenerate_query: bool,
}

/// Mean-of-word-embeddings cosine similarity, the default scorer.
pub struct CosineScorer<'a> {
    table: &'a EmbeddingTable,
    index: &'a LabelIndex,
}

impl<'a> CosineScorer<'a> {
    pub fn new(table: &'a EmbeddingTable, index: &'a LabelIndex) -> Self {
        CosineScorer { table, index }
    }
}

impl Scorer for CosineScorer<'_> {
    fn score(&self, generated: &str, labels: &[&str]) -> Result<ScoreSet, ResolverError> {
        if labels.len() != self.index.len() {
            return Err(ResolverError::IndexSizeMismatch {
                index: self.index.len(),
                schema: labels.len(),
            });
        }
        let q = self.table.mean_vector(generated)?;
        if q.degenerate {
            return Ok(ScoreSet {
                scores: alloc::vec![0.0; labels.len()],
                degenerate_query: true,
            });
        }
        let qn = normalized(q.vector);
        let scores = self
            .index
            .vectors()
            .iter()
            .map(|v| qn.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect();
        Ok(ScoreSet {
            scores,
            degenerate_query: false,
        })
    }
}

/// Argmax over label scores; ties break toward the earlier schema entry.
/// A degenerate (all-unknown) query resolves to the first entry with
/// similarity 0 and the degenerate flag set.
pub fn resolve_with(
    generated: &str,
    schema: &CanonicalSchema,
    scorer: &dyn Scorer,
) -> Result<Resolution, ResolverError> {
    if schema.is_empty() {
        return Err(ResolverError::EmptySchema);
    }
    let labels: Vec<&str> = schema.entries().iter().map(|e| e.canonical.as_str()).collect();
    let set = scorer.score(generated, &labels)?;
    let mut best = 0usize;
    for (i, &s) in set.scores.iter().enumerate() {
        if s > set.scores[best] {
            best = i;
        }
    }
    let mut runner_up = -1.0f32;
    for (i, &s) in set.scores.iter().enumerate() {
        if i != best && s > runner_up {
            runner_up = s;
        }
    }
    let e = &schema.entries()[best];
    let similarity = set.scores[best];
    Ok(Resolution {
        predicted_intent: e.intent.clone(),
        matched_canonical: e.canonical.clone(),
        similarity,
        runner_up_similarity: runner_up,
        margin: similarity - runner_up,
        degenerate: set.degenerate_query,
    })
}

/// Nearest-neighbour resolution under the default cosine scorer.
pub fn resolve(
    generated: &str,
    schema: &CanonicalSchema,
    index: &LabelIndex,
    table: &EmbeddingTable,
) -> Result<Resolution, ResolverError> {
    let scorer = CosineScorer::new(table, index);
    resolve_with(generated, schema, &scorer)
}
