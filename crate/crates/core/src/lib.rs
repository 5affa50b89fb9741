//! Retrieval-augmented multi-agent sarcasm detection.

pub mod corpus;
pub mod domain;
pub mod embedding;
pub mod error;
pub mod evaluation;
mod http;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod retry;

pub use error::{Error, Result, Stage};
pub use http::HttpFailure;
