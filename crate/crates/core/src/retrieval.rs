//! Label-partitioned exact top-k retrieval.
//!
//! The knowledge base is split into sarcastic and non-sarcastic partitions
//! and each is scanned exhaustively, so every query gets the top k of each
//! label. Ties on similarity go to the lexicographically lower id.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::corpus::CorpusRow;
use crate::domain::{Exemplar, Label, RetrievedContext, ScoredExemplar};
use crate::embedding::{dot, l2_norm, Embedder, EmbedError};
use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Default)]
pub struct DualIndex {
    sarcastic: Vec<Arc<Exemplar>>,
    non_sarcastic: Vec<Arc<Exemplar>>,
    dimension: usize,
}

impl DualIndex {
    pub fn sarcastic(&self) -> &[Arc<Exemplar>] {
        &self.sarcastic
    }

    pub fn non_sarcastic(&self) -> &[Arc<Exemplar>] {
        &self.non_sarcastic
    }

    /// Embedding dimension, 0 for an empty index.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.sarcastic.len() + self.non_sarcastic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (sarcastic, non-sarcastic) partition sizes.
    pub fn partition_sizes(&self) -> (usize, usize) {
        (self.sarcastic.len(), self.non_sarcastic.len())
    }

    /// Top-k of each partition by cosine similarity to `query`, which must be
    /// unit-normalized. An empty partition yields a degraded result holding
    /// only the other side.
    pub fn retrieve(&self, query: &[f32], k: usize) -> Result<RetrievedContext<ScoredExemplar>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: query.len(),
            });
        }
        let sarcastic = top_k(&self.sarcastic, query, k);
        let non_sarcastic = top_k(&self.non_sarcastic, query, k);
        let degraded = sarcastic.is_empty()
            || non_sarcastic.is_empty()
            || sarcastic.len() != non_sarcastic.len();
        if degraded {
            log::warn!(
                "imbalanced retrieval: {} sarcastic vs {} non-sarcastic (k = {k})",
                sarcastic.len(),
                non_sarcastic.len()
            );
        }
        Ok(RetrievedContext {
            sarcastic,
            non_sarcastic,
            k,
            degraded,
        })
    }
}

fn rank(a: &ScoredExemplar, b: &ScoredExemplar) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.exemplar.id.cmp(&b.exemplar.id))
}

fn top_k(partition: &[Arc<Exemplar>], query: &[f32], k: usize) -> Vec<ScoredExemplar> {
    let mut scored: Vec<ScoredExemplar> = partition
        .iter()
        .map(|e| ScoredExemplar {
            exemplar: Arc::clone(e),
            similarity: dot(&e.embedding, query).clamp(-1.0, 1.0),
        })
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_by(rank);
    scored
}

/// Splits exemplars by label, preserving input order within each side.
pub fn build_index(exemplars: Vec<Exemplar>) -> Result<DualIndex> {
    let Some(first) = exemplars.first() else {
        return Ok(DualIndex::default());
    };
    let dimension = first.embedding.len();
    if dimension == 0 {
        return Err(Error::InvalidInput("exemplar embeddings are empty".into()));
    }
    let mut index = DualIndex {
        dimension,
        ..DualIndex::default()
    };
    for e in exemplars {
        if e.embedding.len() != dimension {
            return Err(Error::InvalidInput(format!(
                "exemplar {} has dimension {}, expected {dimension}",
                e.id,
                e.embedding.len()
            )));
        }
        if (l2_norm(&e.embedding) - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("exemplar {} is not unit-normalized", e.id)));
        }
        match e.label {
            Label::Sarcastic => index.sarcastic.push(Arc::new(e)),
            Label::NonSarcastic => index.non_sarcastic.push(Arc::new(e)),
        }
    }
    Ok(index)
}

/// Embeds corpus rows (text only) into exemplars. Rows need labels.
pub async fn ingest_corpus(rows: &[CorpusRow], embedder: &Embedder) -> Result<Vec<Exemplar>> {
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let label = row
            .label
            .ok_or_else(|| Error::InvalidInput(format!("row {i} has no label")))?;
        labels.push(label);
    }
    let texts: Vec<String> = rows.iter().map(|r| r.text.clone()).collect();
    let vectors = embedder.embed_batch(&texts).await.map_err(|e| match e {
        EmbedError::Batch { index, source } => Error::IngestAborted {
            embedded: index,
            total: rows.len(),
            source: *source,
        },
        other => Error::IngestAborted {
            embedded: 0,
            total: rows.len(),
            source: other,
        },
    })?;
    Ok(rows
        .iter()
        .zip(labels)
        .zip(vectors)
        .enumerate()
        .map(|(i, ((row, label), embedding))| Exemplar {
            id: row.id_or_index(i),
            text: row.text.clone(),
            label,
            embedding,
        })
        .collect())
}
