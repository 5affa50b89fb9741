use async_trait::async_trait;

use super::{EmbedError, EmbeddingProvider};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Offline embedder: signed feature hashing of character trigrams.
///
/// The text is lowercased and padded with one space on each side; every
/// character trigram is hashed with seeded FNV-1a 64, bucketed by
/// `hash % dimension` and added with sign `-1` when the top hash bit is
/// set. Output is not normalized (the [`super::Embedder`] does that).
#[derive(Debug, Clone)]
pub struct FeatureHashEmbedder {
    dimension: usize,
    seed: u64,
    model_id: String,
}

impl FeatureHashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;

    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            seed,
            model_id: format!("char3-fnv1a-d{dimension}-s{seed}"),
        }
    }

    fn vector(&self, text: &str) -> Vec<f32> {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut v = vec![0.0f32; self.dimension];
        let mut buf = String::new();
        for gram in padded.windows(3) {
            buf.clear();
            buf.extend(gram);
            let h = fnv1a(self.seed, buf.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        if v.iter().all(|&x| x == 0.0) {
            // every trigram cancelled out; fall back to a whole-text bucket
            let h = fnv1a(self.seed, text.as_bytes());
            v[(h % self.dimension as u64) as usize] = 1.0;
        }
        v
    }
}

#[async_trait]
impl EmbeddingProvider for FeatureHashEmbedder {
    fn name(&self) -> &str {
        "feature-hashing"
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_batch(&self) -> usize {
        256
    }

    async fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                if t.trim().is_empty() {
                    Err(EmbedError::EmptyText)
                } else {
                    Ok(self.vector(t))
                }
            })
            .collect()
    }
}
