use std::time::Instant;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse, TokenUsage};
use crate::http::{join_url, post_json, HttpFailure};
use crate::retry::RetryPolicy;

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl RemoteChat {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.into(),
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_env(base_url: impl Into<String>, key_env: &str) -> Result<Self, LlmError> {
        let key = std::env::var(key_env).map_err(|_| LlmError::MissingApiKey(key_env.to_owned()))?;
        Ok(Self::new(base_url, Some(key)))
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Request body: the whole prompt as one user message.
    pub fn request_body(request: &LlmRequest) -> Value {
        json!({
            "model": request.model_id,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn parse(payload: &Value) -> Result<(String, Option<TokenUsage>), LlmError> {
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| HttpFailure::Malformed("missing choices[0].message.content".into()))?;
        if text.is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        let usage = payload.get("usage").and_then(|u| {
            Some(TokenUsage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok((text.to_owned(), usage))
    }
}

#[async_trait]
impl LlmBackend for RemoteChat {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn fingerprint(&self) -> String {
        format!("openai-compatible@{}", self.base_url)
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let url = join_url(&self.base_url, "chat/completions");
        let start = Instant::now();
        let payload = post_json(
            &self.client,
            &url,
            self.api_key.as_deref(),
            &Self::request_body(request),
            self.retry,
        )
        .await?;
        let (text, token_usage) = Self::parse(&payload)?;
        Ok(LlmResponse {
            text,
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            token_usage,
        })
    }
}
