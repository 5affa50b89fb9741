//! Text embeddings: providers, L2 normalization, cosine similarity and a
//! content-addressed persistent cache in front of any provider.

mod cache;
mod hashing;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

pub use cache::{CacheKey, EmbeddingCache};
pub use hashing::FeatureHashEmbedder;
pub use remote::RemoteEmbedder;

use crate::error::{Error, Result};
use crate::http::HttpFailure;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider unreachable: {0}")]
    Unreachable(#[from] HttpFailure),

    #[error("provider returned a {actual}-dim vector, configured dimension is {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("provider returned a zero or non-finite vector")]
    Degenerate,

    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),

    #[error("embedding cache I/O: {0}")]
    Cache(#[from] std::io::Error),

    #[error("text {index} of batch: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

/// Something that turns texts into fixed-length vectors. Vectors returned
/// here are raw; [`Embedder`] normalizes and caches them.
#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn model_id(&self) -> &str;
    fn dimension(&self) -> usize;

    /// Largest number of texts sent in one `embed_raw` call.
    fn max_batch(&self) -> usize {
        1
    }

    async fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Scales `v` to unit L2 norm in place.
pub fn l2_normalize(v: &mut [f32]) -> Result<(), EmbedError> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::Degenerate);
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a, b).clamp(-1.0, 1.0))
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// A provider fronted by the embedding cache. Safe to share across tasks.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Arc<EmbeddingCache>,
    fresh: AtomicUsize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: Arc<EmbeddingCache>) -> Self {
        Self {
            provider,
            cache,
            fresh: AtomicUsize::new(0),
        }
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    /// Texts sent to the provider (cache misses) since construction.
    pub fn fresh_count(&self) -> usize {
        self.fresh.load(Ordering::Relaxed)
    }

    pub fn key_for(&self, text: &str) -> CacheKey {
        CacheKey::new(self.provider.name(), self.provider.model_id(), text)
    }

    pub async fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut out = self
            .embed_batch(&[text.to_owned()])
            .await
            .map_err(|e| match e {
                EmbedError::Batch { source, .. } => *source,
                other => other,
            })?;
        Ok(out.pop().expect("one vector per text"))
    }

    /// Embeds every text, consulting the cache first. Misses are sent to the
    /// provider in chunks of `max_batch`; each chunk is cached as soon as it
    /// returns, so a failure keeps earlier progress.
    pub async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out: Vec<Option<Vec<f32>>> = Vec::with_capacity(texts.len());
        let mut misses = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            if text.trim().is_empty() {
                return Err(EmbedError::Batch {
                    index: i,
                    source: Box::new(EmbedError::EmptyText),
                });
            }
            let hit = self.cache.get(&self.key_for(text));
            if hit.is_none() {
                misses.push(i);
            }
            out.push(hit);
        }

        // Duplicate misses within a batch are embedded once.
        let mut pending: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for &i in &misses {
            seen.entry(texts[i].as_str()).or_insert_with(|| {
                pending.push(i);
                i
            });
        }

        let dim = self.provider.dimension();
        for chunk in pending.chunks(self.provider.max_batch().max(1)) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.provider.embed_raw(&batch).await.map_err(|e| EmbedError::Batch {
                index: chunk[0],
                source: Box::new(e),
            })?;
            if vectors.len() != batch.len() {
                return Err(EmbedError::Batch {
                    index: chunk[0],
                    source: Box::new(EmbedError::Unreachable(HttpFailure::Malformed(format!(
                        "expected {} vectors, got {}",
                        batch.len(),
                        vectors.len()
                    )))),
                });
            }
            for (&i, mut v) in chunk.iter().zip(vectors) {
                let wrap = |source| EmbedError::Batch {
                    index: i,
                    source: Box::new(source),
                };
                if v.len() != dim {
                    return Err(wrap(EmbedError::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    }));
                }
                l2_normalize(&mut v).map_err(wrap)?;
                self.cache.insert(&self.key_for(&texts[i]), &v).map_err(|e| wrap(e.into()))?;
                self.fresh.fetch_add(1, Ordering::Relaxed);
                out[i] = Some(v);
            }
        }

        for &i in &misses {
            if out[i].is_none() {
                out[i] = self.cache.get(&self.key_for(&texts[i]));
            }
        }
        Ok(out
            .into_iter()
            .map(|v| v.expect("every text resolved"))
            .collect())
    }
}
