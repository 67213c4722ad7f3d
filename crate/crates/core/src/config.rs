//! Run configuration, read from one TOML file.
//!
//! Every key has a default, so an empty file is a valid zero-shot configuration
//! for the Abortion topic. Relative paths are resolved against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodingPolicy, TopicMap};
use crate::llm_client::{CompletionAllowance, RetryPolicy};
use crate::prompts::{self, FewShotExample, PromptKind};

pub const DEFAULT_API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Replay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::HttpChat => "http_chat",
            BackendKind::Replay => "replay",
        })
    }
}

impl FromStr for BackendKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "http_chat" | "http" => Ok(BackendKind::HttpChat),
            "replay" => Ok(BackendKind::Replay),
            other => Err(ConfigError::Invalid(format!(
                "unknown backend {other:?} (expected http_chat or replay)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let policy = RetryPolicy::default();
        RetryConfig {
            max_attempts: policy.max_attempts,
            backoff_ms: policy
                .backoff
                .iter()
                .map(|d| d.as_millis() as u64)
                .collect(),
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            backoff: self
                .backoff_ms
                .iter()
                .copied()
                .map(Duration::from_millis)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env: String,
    pub max_concurrency: usize,
    pub temperature: f64,
    pub requests_per_minute: Option<u32>,
    pub timeout_secs: u64,
    pub retry: RetryConfig,
    pub replay_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::HttpChat,
            base_url: Some("https://api.openai.com/v1".to_string()),
            model_name: Some("gpt-3.5-turbo".to_string()),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            max_concurrency: 4,
            temperature: 0.0,
            requests_per_minute: None,
            timeout_secs: 60,
            retry: RetryConfig::default(),
            replay_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub raw_train: PathBuf,
    pub raw_test: PathBuf,
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            raw_train: PathBuf::from("data/raw_train_all_onecol.csv"),
            raw_test: PathBuf::from("data/raw_test_all_onecol.csv"),
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingConfig {
    pub usd_per_1k_tokens: f64,
    pub completion_allowance: CompletionAllowance,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            usd_per_1k_tokens: 0.002,
            completion_allowance: CompletionAllowance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotConfig {
    pub examples: Vec<FewShotExample>,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            examples: prompts::default_examples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topic: String,
    pub seed: u64,
    /// Run directory name under the workdir, e.g. `llm_chatgpt_turbo_3_5`.
    pub model_type: String,
    pub prompt_kind: PromptKind,
    pub encoding_fallback: String,
    pub lenient_parse: bool,
    /// Extra or replacement topic → target entries.
    pub topics: BTreeMap<String, String>,
    pub paths: PathsConfig,
    pub backend: BackendConfig,
    pub pricing: PricingConfig,
    pub few_shot: FewShotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topic: "Abortion".to_string(),
            seed: 42,
            model_type: "llm_chatgpt_turbo_3_5".to_string(),
            prompt_kind: PromptKind::ZeroShot,
            encoding_fallback: "windows-1252".to_string(),
            lenient_parse: false,
            topics: BTreeMap::new(),
            paths: PathsConfig::default(),
            backend: BackendConfig::default(),
            pricing: PricingConfig::default(),
            few_shot: FewShotConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.paths.raw_train);
        resolve(&mut self.paths.raw_test);
        resolve(&mut self.paths.workdir);
        if let Some(p) = self.backend.replay_path.as_mut() {
            resolve(p);
        }
    }

    /// Checks cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let b = &self.backend;
        if b.max_concurrency == 0 {
            return invalid("backend.max_concurrency must be at least 1".into());
        }
        // replay_path is checked when the backend is built: it may be given
        // on the command line
        if b.kind == BackendKind::HttpChat {
            if b.base_url.as_deref().is_none_or(str::is_empty) {
                return invalid("http_chat backend requires backend.base_url".into());
            }
            if b.model_name.as_deref().is_none_or(str::is_empty) {
                return invalid("http_chat backend requires backend.model_name".into());
            }
        }
        let price = self.pricing.usd_per_1k_tokens;
        if price.is_nan() || price < 0.0 {
            return invalid("pricing.usd_per_1k_tokens must be non-negative".into());
        }
        if self.model_type.is_empty() || self.model_type.contains(['/', '\\']) {
            return invalid(format!(
                "model_type {:?} is not a plain directory name",
                self.model_type
            ));
        }
        if self.prompt_kind == PromptKind::FewShot {
            prompts::validate_examples(&self.few_shot.examples)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.topic_map()
            .target(&self.topic)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.encoding()?;
        Ok(())
    }

    pub fn topic_map(&self) -> TopicMap {
        let mut map = TopicMap::default();
        for (k, v) in &self.topics {
            map.insert(k.clone(), v.clone());
        }
        map
    }

    pub fn encoding(&self) -> Result<EncodingPolicy, ConfigError> {
        EncodingPolicy::with_fallback(&self.encoding_fallback)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn processed_dir(&self) -> PathBuf {
        self.paths.workdir.join("processed")
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.processed_dir().join("corpus.csv")
    }

    pub fn partitions_path(&self) -> PathBuf {
        self.processed_dir().join("partitions.csv")
    }

    /// `<workdir>/<model_type>/<prompt_kind>/`
    pub fn run_dir(&self) -> PathBuf {
        self.paths
            .workdir
            .join(&self.model_type)
            .join(self.prompt_kind.as_str())
    }

    pub fn summary_dir(&self) -> PathBuf {
        self.paths.workdir.join("summary")
    }

    pub fn uses_default_examples(&self) -> bool {
        prompts::is_default_example_set(&self.few_shot.examples)
    }
}
