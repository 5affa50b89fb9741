use async_trait::async_trait;
use serde_json::{json, Value};

use super::{EmbedError, EmbeddingProvider};
use crate::http::{join_url, post_json, HttpFailure};
use crate::retry::RetryPolicy;

/// Client for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: reqwest::Client,
    base_url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        api_key: Option<String>,
    ) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.into(),
            model: model.into(),
            dimension,
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads the API key from the environment variable `key_env`.
    pub fn from_env(
        base_url: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        key_env: &str,
    ) -> Result<Self, EmbedError> {
        let key = std::env::var(key_env).map_err(|_| EmbedError::MissingApiKey(key_env.to_owned()))?;
        Ok(Self::new(base_url, model, dimension, Some(key)))
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn parse(&self, payload: &Value, expected: usize) -> Result<Vec<Vec<f32>>, EmbedError> {
        let malformed = |m: &str| EmbedError::Unreachable(HttpFailure::Malformed(m.to_owned()));
        let data = payload
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing data array"))?;
        if data.len() != expected {
            return Err(malformed(&format!("expected {expected} embeddings, got {}", data.len())));
        }
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; expected];
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing embedding"))?;
            let vector = values
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| malformed("non-numeric embedding value"))?;
            if vector.len() != self.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dimension,
                    actual: vector.len(),
                });
            }
            let slot = slots.get_mut(index).ok_or_else(|| malformed("embedding index out of range"))?;
            *slot = Some(vector);
        }
        slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| malformed("duplicate embedding index"))
    }
}

#[async_trait]
impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_batch(&self) -> usize {
        64
    }

    async fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = json!({ "model": self.model, "input": texts });
        let url = join_url(&self.base_url, "embeddings");
        let payload = post_json(&self.client, &url, self.api_key.as_deref(), &body, self.retry).await?;
        self.parse(&payload, texts.len())
    }
}
