//! JSON-over-HTTP POST shared by the remote embedding and chat clients.

use std::time::Duration;

use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde_json::Value;
use thiserror::Error;

use crate::retry::{with_retry, Attempt, RetryPolicy};

const MAX_ADVISED_DELAY: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HttpFailure {
    #[error("transport failed after {attempts} attempts: {message}")]
    Unreachable { attempts: u32, message: String },

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed provider payload: {0}")]
    Malformed(String),
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

fn advised_delay(headers: &HeaderMap) -> Option<Duration> {
    let raw = headers.get(RETRY_AFTER)?.to_str().ok()?;
    let secs: f64 = raw.trim().parse().ok()?;
    if !secs.is_finite() || secs < 0.0 {
        return None;
    }
    Some(Duration::from_secs_f64(secs).min(MAX_ADVISED_DELAY))
}

/// POSTs `body` to `url`, retrying transport failures, 5xx responses and
/// 429s under `policy`. Other 4xx responses and undecodable bodies fail
/// immediately.
pub(crate) async fn post_json(
    client: &reqwest::Client,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: RetryPolicy,
) -> Result<Value, HttpFailure> {
    let result = with_retry(policy, |_attempt| async move {
        let mut req = client.post(url).json(body);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(HttpFailure::Unreachable { attempts: 0, message: e.to_string() }, None)),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            let delay = advised_delay(resp.headers());
            return Err(Attempt::Retry(HttpFailure::RateLimited { attempts: 0 }, delay));
        }
        if status.is_server_error() {
            let text = resp.text().await.unwrap_or_default();
            return Err(Attempt::Retry(
                HttpFailure::Unreachable {
                    attempts: 0,
                    message: format!("HTTP {}: {}", status.as_u16(), text),
                },
                None,
            ));
        }
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => {
                return Err(Attempt::Retry(HttpFailure::Unreachable { attempts: 0, message: e.to_string() }, None))
            }
        };
        if !status.is_success() {
            return Err(Attempt::Fatal(HttpFailure::Status {
                status: status.as_u16(),
                body: text,
            }));
        }
        serde_json::from_str::<Value>(&text)
            .map_err(|e| Attempt::Fatal(HttpFailure::Malformed(e.to_string())))
    })
    .await;

    result.map_err(|(failure, attempts)| match failure {
        HttpFailure::Unreachable { message, .. } => HttpFailure::Unreachable { attempts, message },
        HttpFailure::RateLimited { .. } => HttpFailure::RateLimited { attempts },
        other => other,
    })
}
