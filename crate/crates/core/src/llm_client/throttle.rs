use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

use super::backend::{Backend, BackendError};

/// Bounded retries with a backoff schedule. The last schedule entry repeats
/// when there are more retries than entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            backoff: [1, 4, 16].map(Duration::from_secs).to_vec(),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.backoff
            .get(retry as usize)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default()
    }
}

/// Spaces request starts so no more than `per_minute` begin in any minute on
/// average. `None` disables spacing.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(per_minute: Option<u32>) -> Self {
        let interval = per_minute
            .filter(|&n| n > 0)
            .map(|n| Duration::from_secs(60) / n);
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    /// Waits until the caller may start a request.
    pub async fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait_until = {
            let mut slot = self.next_slot.lock().await;
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + interval);
            start
        };
        tokio::time::sleep_until(wait_until).await;
    }
}

/// Result of driving one prompt through the retry loop.
#[derive(Debug)]
pub struct Attempted {
    pub result: Result<String, BackendError>,
    pub attempts: u32,
}

/// Calls the backend until success, a non-retryable error, or the attempt
/// budget runs out. Never makes more than `max(1, max_attempts)` calls.
pub async fn complete_with_retry(
    backend: &dyn Backend,
    limiter: &RateLimiter,
    policy: &RetryPolicy,
    id: &str,
    prompt: &str,
) -> Attempted {
    let budget = policy.max_attempts.max(1);
    let mut attempts = 0;
    loop {
        limiter.acquire().await;
        attempts += 1;
        let result = backend.complete(id, prompt).await;
        match result {
            Err(ref e) if e.is_retryable() && attempts < budget => {
                let delay = policy.delay(attempts - 1);
                log::warn!("ID {id}: attempt {attempts} failed ({e}); retrying in {delay:?}");
                tokio::time::sleep(delay).await;
            }
            result => return Attempted { result, attempts },
        }
    }
}
