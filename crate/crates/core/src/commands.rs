//! Pipeline stages driven by a [`RunConfig`]. The binary is a thin wrapper
//! around these functions.
//!
//! Layout under the workdir:
//!
//! ```text
//! processed/corpus.csv, processed/partitions.csv
//! <model_type>/<prompt_kind>/prompts.csv, predictions.csv, metrics.csv,
//!     confusion_matrix.csv, confusion_matrices.svg, manifest.json
//! summary/summary.csv
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Map, Value};

use crate::config::{BackendKind, ConfigError, RunConfig};
use crate::corpus::{self, CorpusError, LabelDistribution, PreprocessOptions, Record};
use crate::label::Partition;
use crate::llm_client::{
    self, cache_rotate, estimate_cost, Backend, ClientError, CostEstimate, DispatchOptions,
    HeuristicCounter, HttpChatBackend, HttpChatSettings, ReplayBackend, RotateMode,
};
use crate::metrics::{self, MetricsError, RunEvaluation};
use crate::parser::{ParseMode, ParseOptions};
use crate::predictions::{self, PredictionsError};
use crate::prompts::{self, PromptError, PromptKind, RenderedPrompt};
use crate::summary::{self, SummaryError, SummaryRow};

/// Partitions the LLM runs are prompted and scored on.
pub const LLM_PARTITIONS: [Partition; 2] = [Partition::Vali, Partition::Test];

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Predictions(#[from] PredictionsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("processed corpus not found at {0}; run `preprocess` first")]
    MissingCorpus(PathBuf),
    #[error("no predictions file at {0}; run `predict` first")]
    MissingPredictions(PathBuf),
    #[error("{} prompt(s) failed after retries: {}", .0.len(), .0.join(", "))]
    FailedPrompts(Vec<String>),
    #[error("no run directories with metrics.csv under {0}")]
    NoRuns(PathBuf),
}

pub type Result<T> = std::result::Result<T, CommandError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Timestamp for manifests. Honours `SOURCE_DATE_EPOCH` for reproducible
/// builds of the artifacts.
pub fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    fixed
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Clone)]
pub struct PreprocessReport {
    pub corpus_path: PathBuf,
    pub partitions_path: PathBuf,
    pub raw_train: usize,
    pub raw_test: usize,
    pub dropped_train: usize,
    pub dropped_test: usize,
    pub distribution: LabelDistribution,
}

impl fmt::Display for PreprocessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "number of tweets in the training data: {}",
            self.raw_train
        )?;
        writeln!(f, "number of tweets in the test data: {}", self.raw_test)?;
        writeln!(
            f,
            "duplicates dropped: {} (training file), {} (test file)",
            self.dropped_train, self.dropped_test
        )?;
        write!(f, "{}", self.distribution)?;
        write!(
            f,
            "wrote {} and {}",
            self.corpus_path.display(),
            self.partitions_path.display()
        )
    }
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessReport> {
    cfg.validate()?;
    let topics = cfg.topic_map();
    let opts = PreprocessOptions {
        topic: &cfg.topic,
        topics: &topics,
        encoding: cfg.encoding()?,
        seed: cfg.seed,
    };
    let prepared = corpus::prepare_corpus(&cfg.paths.raw_train, &cfg.paths.raw_test, &opts)?;
    create_dir(&cfg.processed_dir())?;
    let corpus_path = cfg.corpus_path();
    let partitions_path = cfg.partitions_path();
    corpus::write_corpus_csv(&corpus_path, &prepared.records)?;
    corpus::write_partitions_csv(&partitions_path, &prepared.records)?;
    Ok(PreprocessReport {
        corpus_path,
        partitions_path,
        raw_train: prepared.raw_train,
        raw_test: prepared.raw_test,
        dropped_train: prepared.dropped_train,
        dropped_test: prepared.dropped_test,
        distribution: corpus::label_distribution(&prepared.records),
    })
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Vec<Record>> {
    let path = cfg.corpus_path();
    if !path.is_file() {
        return Err(CommandError::MissingCorpus(path));
    }
    Ok(corpus::read_corpus_csv(&path)?)
}

/// Prompts for every validation/test record, minus few-shot leakage.
#[derive(Debug, Clone)]
pub struct RunPrompts {
    pub prompts: Vec<RenderedPrompt>,
    pub excluded: BTreeSet<String>,
}

pub fn build_run_prompts(cfg: &RunConfig, corpus: &[Record]) -> Result<RunPrompts> {
    let target = cfg.topic_map().target(&cfg.topic)?.to_string();
    let examples = &cfg.few_shot.examples;
    let excluded = exclusions(cfg, corpus);
    let mut prompts = Vec::new();
    for partition in LLM_PARTITIONS {
        for r in corpus.iter().filter(|r| r.partition == partition) {
            if !excluded.contains(&r.id) {
                prompts.push(prompts::build_prompt(
                    cfg.prompt_kind,
                    r,
                    &target,
                    examples,
                )?);
            }
        }
    }
    Ok(RunPrompts { prompts, excluded })
}

fn exclusions(cfg: &RunConfig, corpus: &[Record]) -> BTreeSet<String> {
    if cfg.prompt_kind != PromptKind::FewShot {
        return BTreeSet::new();
    }
    let ids = prompts::leakage_exclusion_ids(&cfg.few_shot.examples, corpus);
    if !ids.is_empty() {
        log::warn!(
            "{} validation/test record(s) match a few-shot example and are excluded",
            ids.len()
        );
    }
    ids
}

pub fn cmd_estimate_cost(cfg: &RunConfig) -> Result<CostEstimate> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let run = build_run_prompts(cfg, &corpus)?;
    Ok(estimate_cost(
        &run.prompts,
        &HeuristicCounter,
        cfg.pricing.usd_per_1k_tokens,
        &cfg.pricing.completion_allowance,
    ))
}

/// Builds the configured backend. Fails before any work when the HTTP
/// backend's API-key variable is unset.
pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn Backend>> {
    let b = &cfg.backend;
    Ok(match b.kind {
        BackendKind::Replay => {
            let path = b.replay_path.as_ref().ok_or_else(|| {
                ConfigError::Invalid("replay backend requires backend.replay_path".into())
            })?;
            Box::new(ReplayBackend::from_csv(path)?)
        }
        BackendKind::HttpChat => {
            let api_key = std::env::var(&b.api_key_env)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| ClientError::MissingApiKey(b.api_key_env.clone()))?;
            Box::new(HttpChatBackend::new(HttpChatSettings {
                base_url: b.base_url.clone().unwrap_or_default(),
                model: b.model_name.clone().unwrap_or_default(),
                api_key,
                temperature: b.temperature,
                timeout: Duration::from_secs(b.timeout_secs.max(1)),
            })?)
        }
    })
}

pub fn dispatch_options(cfg: &RunConfig) -> DispatchOptions {
    DispatchOptions {
        max_concurrency: cfg.backend.max_concurrency,
        retry: cfg.backend.retry.policy(),
        requests_per_minute: cfg.backend.requests_per_minute,
        mode: ParseMode::for_kind(cfg.prompt_kind),
        parse: parse_options(cfg),
    }
}

fn parse_options(cfg: &RunConfig) -> ParseOptions {
    ParseOptions {
        lenient: cfg.lenient_parse,
    }
}

/// What to do with an existing predictions file before predicting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CachePolicy {
    /// Reuse answers already in `predictions.csv`.
    #[default]
    Resume,
    /// Move `predictions.csv` aside to `predictions_cached.csv` and start over.
    Fresh,
    /// Move `predictions_cached.csv` back into place, then resume from it.
    Restore,
}

#[derive(Debug, Clone)]
pub struct PredictReport {
    pub run_dir: PathBuf,
    pub predictions_path: PathBuf,
    pub records: usize,
    pub cache_hits: usize,
    pub backend_calls: u64,
    pub fallback_none: usize,
    pub excluded: usize,
}

impl fmt::Display for PredictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {} predictions to {} ({} cached, {} backend calls, {} unparsed mapped to NONE, {} excluded)",
            self.records,
            self.predictions_path.display(),
            self.cache_hits,
            self.backend_calls,
            self.fallback_none,
            self.excluded
        )
    }
}

pub async fn cmd_predict(cfg: &RunConfig, cache: CachePolicy) -> Result<PredictReport> {
    cfg.validate()?;
    let backend = make_backend(cfg)?;
    cmd_predict_with(cfg, backend.as_ref(), cache).await
}

/// [`cmd_predict`] against an explicit backend.
pub async fn cmd_predict_with(
    cfg: &RunConfig,
    backend: &dyn Backend,
    cache: CachePolicy,
) -> Result<PredictReport> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let run = build_run_prompts(cfg, &corpus)?;
    let run_dir = cfg.run_dir();
    create_dir(&run_dir)?;
    let predictions_path = run_dir.join("predictions.csv");
    match cache {
        CachePolicy::Resume => {}
        CachePolicy::Fresh => {
            cache_rotate(&predictions_path, RotateMode::Fresh)?;
        }
        CachePolicy::Restore => {
            cache_rotate(&predictions_path, RotateMode::Restore)?;
        }
    }
    let opts = dispatch_options(cfg);
    let cached = if predictions_path.is_file() {
        predictions::read_predictions_csv(&predictions_path, opts.mode, opts.parse)?
    } else {
        Vec::new()
    };

    let started_at = timestamp();
    predictions::write_prompts_csv(&run_dir.join("prompts.csv"), &run.prompts)?;
    let outcome = llm_client::predict_labels(&run.prompts, backend, cached, &opts).await?;
    predictions::write_predictions_csv(&predictions_path, &outcome.records)?;

    let fallback_none = outcome.records.iter().filter(|r| r.is_fallback()).count();
    let failed: Vec<String> = outcome.failed.iter().map(|f| f.id.clone()).collect();
    let section = json!({
        "started_at": started_at,
        "finished_at": timestamp(),
        "backend": backend.identity(),
        "prompts": run.prompts.len(),
        "records_written": outcome.records.len(),
        "cache_hits": outcome.cache_hits,
        "backend_calls": outcome.backend_calls,
        "fallback_none": fallback_none,
        "failed_ids": failed,
        "lenient_parse": cfg.lenient_parse,
        "few_shot_examples": few_shot_label(cfg),
        "excluded_for_leakage": run.excluded,
    });
    update_manifest(cfg, &run_dir, "predict", section)?;

    if !failed.is_empty() {
        return Err(CommandError::FailedPrompts(failed));
    }
    Ok(PredictReport {
        run_dir,
        predictions_path,
        records: outcome.records.len(),
        cache_hits: outcome.cache_hits,
        backend_calls: outcome.backend_calls,
        fallback_none,
        excluded: run.excluded.len(),
    })
}

fn few_shot_label(cfg: &RunConfig) -> Value {
    match (cfg.prompt_kind, cfg.uses_default_examples()) {
        (PromptKind::FewShot, true) => json!("default"),
        (PromptKind::FewShot, false) => json!("custom"),
        _ => Value::Null,
    }
}

/// Merges one section into `manifest.json`, refreshing the config snapshot.
fn update_manifest(cfg: &RunConfig, run_dir: &Path, key: &str, section: Value) -> Result<()> {
    let path = run_dir.join("manifest.json");
    let mut manifest = fs::read_to_string(&path)
        .ok()
        .and_then(|text| serde_json::from_str::<Map<String, Value>>(&text).ok())
        .unwrap_or_default();
    manifest.insert(
        "tool".into(),
        json!(concat!("stance ", env!("CARGO_PKG_VERSION"))),
    );
    manifest.insert("model_type".into(), json!(cfg.model_type));
    manifest.insert("prompt_kind".into(), json!(cfg.prompt_kind.as_str()));
    manifest.insert(
        "config".into(),
        serde_json::to_value(cfg).unwrap_or(Value::Null),
    );
    manifest.insert(key.into(), section);
    let text = serde_json::to_string_pretty(&Value::Object(manifest)).unwrap_or_default();
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Score a different run directory, e.g. a fine-tuned encoder's output.
    pub run_dir: Option<PathBuf>,
    /// Partitions to score; validation and test when empty.
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub run_dir: PathBuf,
    pub evaluation: RunEvaluation,
}

impl fmt::Display for EvaluateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6}{:>6}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "set", "n", "f1_macro", "f1_NONE", "f1_FAVOR", "f1_AGAINST", "fallback"
        )?;
        for p in &self.evaluation.partitions {
            let s = &p.report.scores;
            writeln!(
                f,
                "{:<6}{:>6}{:>10.6}{:>10.6}{:>10.6}{:>10.6}{:>10}",
                p.report.partition.as_str(),
                p.report.n,
                s.f1_macro,
                s.class(crate::StanceLabel::None).f1,
                s.class(crate::StanceLabel::Favor).f1,
                s.class(crate::StanceLabel::Against).f1,
                p.report.fallback_none
            )?;
        }
        write!(
            f,
            "wrote metrics.csv and confusion_matrix.csv to {}",
            self.run_dir.display()
        )
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, opts: &EvaluateOptions) -> Result<EvaluateReport> {
    let corpus = load_corpus(cfg)?;
    let run_dir = opts.run_dir.clone().unwrap_or_else(|| cfg.run_dir());
    let predictions_path = run_dir.join("predictions.csv");
    if !predictions_path.is_file() {
        return Err(CommandError::MissingPredictions(predictions_path));
    }
    let mode = ParseMode::for_kind(cfg.prompt_kind);
    let preds = predictions::read_predictions_csv(&predictions_path, mode, parse_options(cfg))?;
    let partitions = if opts.partitions.is_empty() {
        LLM_PARTITIONS.to_vec()
    } else {
        opts.partitions.clone()
    };
    let excluded = exclusions(cfg, &corpus);
    let evaluation = metrics::evaluate_run(&preds, &corpus, &partitions, &excluded)?;
    let reports: Vec<_> = evaluation
        .partitions
        .iter()
        .map(|p| p.report.clone())
        .collect();
    metrics::write_metrics_csv(&run_dir.join("metrics.csv"), &reports)?;
    metrics::write_confusion_csv(
        &run_dir.join("confusion_matrix.csv"),
        &evaluation.partitions,
    )?;

    let per_partition: Map<String, Value> = reports
        .iter()
        .map(|r| {
            (
                r.partition.as_str().to_string(),
                json!({"n": r.n, "fallback_none": r.fallback_none, "f1_macro": r.scores.f1_macro}),
            )
        })
        .collect();
    let section = json!({
        "evaluated_at": timestamp(),
        "partitions": per_partition,
        "excluded_ids": evaluation.excluded,
        "unknown_prediction_ids": evaluation.unknown_ids.len(),
    });
    update_manifest(cfg, &run_dir, "evaluate", section)?;
    Ok(EvaluateReport {
        run_dir,
        evaluation,
    })
}

#[derive(Debug, Clone)]
pub struct SummaryReport {
    pub path: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub figures: Vec<PathBuf>,
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28}{:<12}{:<10}{:>10}{:>10}{:>10}{:>11}",
            "model_type",
            "prompt_type",
            "partition",
            "f1_macro",
            "f1_NONE",
            "f1_FAVOR",
            "f1_AGAINST"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<28}{:<12}{:<10}{:>10.6}{:>10.6}{:>10.6}{:>11.6}",
                r.model_type,
                r.prompt_type,
                r.partition.as_str(),
                r.f1_macro,
                r.f1_none,
                r.f1_favor,
                r.f1_against
            )?;
        }
        write!(
            f,
            "wrote {} and {} figure(s)",
            self.path.display(),
            self.figures.len()
        )
    }
}

pub fn cmd_summarize(cfg: &RunConfig, only: Option<Partition>) -> Result<SummaryReport> {
    let workdir = &cfg.paths.workdir;
    if !workdir.is_dir() {
        return Err(CommandError::NoRuns(workdir.clone()));
    }
    let runs = summary::discover_runs(workdir)?;
    if runs.is_empty() {
        return Err(CommandError::NoRuns(workdir.clone()));
    }
    let rows = summary::summarize_runs(&runs, only)?;
    let mut figures = Vec::new();
    for run in &runs {
        figures.extend(summary::write_run_figure(run)?);
    }
    let dir = cfg.summary_dir();
    create_dir(&dir)?;
    let path = dir.join("summary.csv");
    summary::write_summary_csv(&path, &rows)?;
    Ok(SummaryReport {
        path,
        rows,
        figures,
    })
}
