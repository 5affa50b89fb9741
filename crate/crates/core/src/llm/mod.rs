//! Chat-completion backends.
//!
//! Every model call in the pipeline goes through [`LlmBackend::complete`]
//! with one rendered prompt sent as a single user message.

mod mock;
mod remote;

use std::fmt;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{CallRecord, MockBackend};
pub use remote::RemoteChat;

use crate::domain::AgentKind;
use crate::http::HttpFailure;

/// Which pipeline role issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoleTag {
    RationaleGen,
    SimilarityAnalyzer,
    Planner,
    Agent(AgentKind),
    Integrator,
}

impl RoleTag {
    pub fn name(self) -> &'static str {
        match self {
            RoleTag::RationaleGen => "rationale",
            RoleTag::SimilarityAnalyzer => "similarity",
            RoleTag::Planner => "planner",
            RoleTag::Agent(a) => a.as_str(),
            RoleTag::Integrator => "integrator",
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Generation settings shared by every request of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o".into(),
            temperature: 0.1,
            max_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub role: RoleTag,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl LlmRequest {
    pub fn new(role: RoleTag, prompt: impl Into<String>, settings: &LlmSettings) -> Self {
        Self {
            role,
            prompt: prompt.into(),
            temperature: settings.temperature,
            max_tokens: settings.max_tokens,
            model_id: settings.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub text: String,
    pub latency_ms: f64,
    /// Only present when the provider reported it.
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,

    #[error(transparent)]
    Http(#[from] HttpFailure),

    #[error("provider returned an empty completion")]
    EmptyCompletion,

    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),

    #[error("mock backend scripted failure for role {0}")]
    Scripted(String),
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Identifies everything besides the model id that shapes responses;
    /// part of the rationale cache key.
    fn fingerprint(&self) -> String {
        self.name().to_owned()
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Runs requests with at most `max_in_flight` outstanding (values below 1
/// are treated as 1). Results come back in request order; a failure is
/// reported in its slot and does not cancel the others.
pub async fn complete_many(
    backend: &dyn LlmBackend,
    requests: &[LlmRequest],
    max_in_flight: usize,
) -> Vec<Result<LlmResponse, LlmError>> {
    stream::iter(requests.iter().map(|r| backend.complete(r)))
        .buffered(max_in_flight.max(1))
        .collect()
        .await
}
