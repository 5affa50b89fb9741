//! Bounded retry with exponential backoff for the remote HTTP clients.

use std::future::Future;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` is 1-based.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << (attempt - 1).min(16))
    }
}

/// How a failed attempt should be handled.
#[derive(Debug)]
pub enum Attempt<E> {
    /// Try again. A server-advised delay replaces the computed backoff.
    Retry(E, Option<Duration>),
    Fatal(E),
}

/// Runs `op` until it succeeds, fails fatally, or exhausts the policy.
/// Returns the last error together with the number of attempts made.
pub async fn with_retry<T, E, F, Fut>(policy: RetryPolicy, mut op: F) -> Result<T, (E, u32)>
where
    F: FnMut(u32) -> Fut,
    Fut: Future<Output = Result<T, Attempt<E>>>,
{
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op(attempt).await {
            Ok(value) => return Ok(value),
            Err(Attempt::Fatal(e)) => return Err((e, attempt)),
            Err(Attempt::Retry(e, advised)) => {
                if attempt >= max {
                    return Err((e, attempt));
                }
                let delay = advised.unwrap_or_else(|| policy.backoff(attempt));
                log::debug!("attempt {attempt} failed, retrying in {delay:?}");
                tokio::time::sleep(delay).await;
                attempt += 1;
            }
        }
    }
}
