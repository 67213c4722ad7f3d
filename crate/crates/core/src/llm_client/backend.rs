use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;

use super::ClientError;

/// Why a single completion attempt failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx responses.
    #[error("{0}")]
    Transient(String),
    /// Retrying cannot help: bad credentials, malformed request or reply.
    #[error("{0}")]
    Fatal(String),
    /// The replay source has no response for this ID.
    #[error("no recorded response for ID {0}")]
    ReplayMiss(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// A source of model completions for rendered prompts.
#[async_trait]
pub trait Backend: Send + Sync {
    /// Human-readable backend identity recorded in run manifests.
    fn identity(&self) -> String;

    async fn complete(&self, id: &str, prompt: &str) -> Result<String, BackendError>;
}

/// Serves canned responses keyed by record ID. Used for offline runs and for
/// replaying published prediction sets.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
    source: String,
    calls: AtomicUsize,
}

impl ReplayBackend {
    pub fn new(responses: HashMap<String, String>) -> Self {
        ReplayBackend {
            responses,
            source: "in-memory".to_string(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads a CSV with columns `ID,response`.
    pub fn from_csv(path: &Path) -> Result<Self, ClientError> {
        let file = fs::File::open(path).map_err(|source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers()?.clone();
        let column = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ClientError::ReplayFormat {
                    path: path.to_path_buf(),
                    message: format!("missing column {name}"),
                })
        };
        let (id_at, resp_at) = (column("ID")?, column("response")?);
        let mut responses = HashMap::new();
        for row in reader.records() {
            let row = row?;
            let (Some(id), Some(resp)) = (row.get(id_at), row.get(resp_at)) else {
                return Err(ClientError::ReplayFormat {
                    path: path.to_path_buf(),
                    message: format!(
                        "line {}: too few fields",
                        row.position().map(|p| p.line()).unwrap_or(0)
                    ),
                });
            };
            responses.insert(id.trim().to_string(), resp.to_string());
        }
        Ok(ReplayBackend {
            responses,
            source: path.display().to_string(),
            calls: AtomicUsize::new(0),
        })
    }

    /// Number of `complete` calls served so far, hits and misses alike.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

#[async_trait]
impl Backend for ReplayBackend {
    fn identity(&self) -> String {
        format!("replay:{}", self.source)
    }

    async fn complete(&self, id: &str, _prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.responses
            .get(id)
            .cloned()
            .ok_or_else(|| BackendError::ReplayMiss(id.to_string()))
    }
}
