//! Batch prediction against a completion backend.
//!
//! Prompts already answered in an existing predictions file are reused as is.
//! The rest are dispatched with at most `max_concurrency` requests in flight,
//! each under a bounded retry policy and a shared request-rate limiter.
//! Results always come back in prompt order.

mod backend;
mod cache;
mod cost;
mod http;
mod throttle;

use std::collections::{HashMap, HashSet};
use std::io;
use std::path::PathBuf;

use futures::StreamExt;

pub use backend::{Backend, BackendError, ReplayBackend};
pub use cache::{cache_rotate, cached_path, RotateMode, RotateOutcome};
pub use cost::{estimate_cost, CompletionAllowance, CostEstimate, HeuristicCounter, TokenCounter};
pub use http::{HttpChatBackend, HttpChatSettings};
pub use throttle::{complete_with_retry, RateLimiter, RetryPolicy};

use crate::parser::{ParseMode, ParseOptions};
use crate::predictions::PredictionRecord;
use crate::prompts::RenderedPrompt;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    ReplayFormat { path: PathBuf, message: String },
    #[error("replay source has no response for ID {0}")]
    ReplayMiss(String),
    #[error("environment variable {0} is not set; it must hold the API key")]
    MissingApiKey(String),
    #[error("cannot rename {from} to {to}: destination exists, resolve manually")]
    RotateCollision { from: PathBuf, to: PathBuf },
    #[error("prompt ID {0} appears more than once")]
    DuplicatePromptId(String),
    #[error("backend setup failed: {0}")]
    Setup(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct DispatchOptions {
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
    pub mode: ParseMode,
    pub parse: ParseOptions,
}

impl DispatchOptions {
    pub fn new(mode: ParseMode) -> Self {
        DispatchOptions {
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            requests_per_minute: None,
            mode,
            parse: ParseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedPrompt {
    pub id: String,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PredictOutcome {
    /// Prompt-order records, followed by cached records for IDs not prompted.
    pub records: Vec<PredictionRecord>,
    pub failed: Vec<FailedPrompt>,
    pub cache_hits: usize,
    /// Total backend calls, retries included.
    pub backend_calls: u64,
}

/// Answers every prompt not already in `cached`.
///
/// A replay miss aborts the run. Other failures that survive the retry policy
/// are reported in [`PredictOutcome::failed`] and left out of `records`.
pub async fn predict_labels(
    prompts: &[RenderedPrompt],
    backend: &dyn Backend,
    cached: Vec<PredictionRecord>,
    opts: &DispatchOptions,
) -> Result<PredictOutcome, ClientError> {
    let mut seen = HashSet::new();
    for p in prompts {
        if !seen.insert(p.record_id.as_str()) {
            return Err(ClientError::DuplicatePromptId(p.record_id.clone()));
        }
    }

    let mut cache: HashMap<String, PredictionRecord> = HashMap::new();
    let mut cache_order = Vec::new();
    for r in cached {
        if !cache.contains_key(&r.id) {
            cache_order.push(r.id.clone());
            cache.insert(r.id.clone(), r);
        }
    }

    let pending: Vec<&RenderedPrompt> = prompts
        .iter()
        .filter(|p| !cache.contains_key(&p.record_id))
        .collect();
    let cache_hits = prompts.len() - pending.len();
    if cache_hits > 0 {
        log::info!("{cache_hits} prompt(s) answered from the existing predictions file");
    }

    let limiter = RateLimiter::new(opts.requests_per_minute);
    let mut answers = futures::stream::iter(pending.iter().map(|p| {
        let limiter = &limiter;
        async move {
            let attempted =
                complete_with_retry(backend, limiter, &opts.retry, &p.record_id, &p.text).await;
            (*p, attempted)
        }
    }))
    .buffered(opts.max_concurrency.max(1));

    let mut fresh: HashMap<String, PredictionRecord> = HashMap::new();
    let mut failed = Vec::new();
    let mut backend_calls = 0u64;
    while let Some((prompt, attempted)) = answers.next().await {
        backend_calls += u64::from(attempted.attempts);
        match attempted.result {
            Ok(text) => {
                let record =
                    PredictionRecord::from_response(&prompt.record_id, text, opts.mode, opts.parse);
                fresh.insert(prompt.record_id.clone(), record);
            }
            Err(BackendError::ReplayMiss(id)) => return Err(ClientError::ReplayMiss(id)),
            Err(e) => {
                log::error!(
                    "ID {}: giving up after {} attempt(s): {e}",
                    prompt.record_id,
                    attempted.attempts
                );
                failed.push(FailedPrompt {
                    id: prompt.record_id.clone(),
                    attempts: attempted.attempts,
                    reason: e.to_string(),
                });
            }
        }
    }
    drop(answers);

    let mut records = Vec::with_capacity(prompts.len());
    for p in prompts {
        if let Some(r) = cache
            .remove(&p.record_id)
            .or_else(|| fresh.remove(&p.record_id))
        {
            records.push(r);
        }
    }
    records.extend(cache_order.iter().filter_map(|id| cache.remove(id)));

    Ok(PredictOutcome {
        records,
        failed,
        cache_hits,
        backend_calls,
    })
}
