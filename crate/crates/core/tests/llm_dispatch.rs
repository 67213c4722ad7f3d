mod common;

use std::collections::HashMap;
use std::fs;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use stance_core::commands::{self, CachePolicy, CommandError};
use stance_core::llm_client::{
    cached_path, predict_labels, Backend, BackendError, DispatchOptions, HttpChatBackend,
    HttpChatSettings, ReplayBackend, RetryPolicy,
};
use stance_core::parser::{ParseMode, ParseStatus};
use stance_core::prompts::RenderedPrompt;
use stance_core::{PromptKind, RunConfig, StanceLabel};

#[derive(Default)]
struct Mock {
    seen: Mutex<Vec<(Option<String>, Value)>>,
    calls: Mutex<HashMap<String, u32>>,
}

/// Behaviour keyed by prompt text: `flaky` fails once with 500, `busy` is
/// always rate limited, `denied` is unauthorized, `garbled` is not JSON.
async fn chat(
    State(mock): State<Arc<Mock>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, String) {
    let auth = headers
        .get("authorization")
        .map(|v| v.to_str().unwrap().to_string());
    let prompt = body["messages"][0]["content"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    mock.seen.lock().unwrap().push((auth, body));
    let n = {
        let mut calls = mock.calls.lock().unwrap();
        let n = calls.entry(prompt.clone()).or_default();
        *n += 1;
        *n
    };
    let reply = |content: &str| {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    };
    match prompt.as_str() {
        "flaky" if n == 1 => (StatusCode::INTERNAL_SERVER_ERROR, "boom".into()),
        "busy" => (StatusCode::TOO_MANY_REQUESTS, "slow down".into()),
        "denied" => (StatusCode::UNAUTHORIZED, "bad key".into()),
        "garbled" => (StatusCode::OK, "<html>".into()),
        _ => (StatusCode::OK, reply(" In-favor.")),
    }
}

async fn serve(mock: Arc<Mock>) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .with_state(mock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1/")
}

fn prompt(id: &str, text: &str) -> RenderedPrompt {
    RenderedPrompt {
        record_id: id.into(),
        kind: PromptKind::ZeroShot,
        text: text.into(),
    }
}

fn quick_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        backoff: vec![Duration::from_millis(1)],
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_backend_retries_transient_errors_only() {
    let mock = Arc::new(Mock::default());
    let base = serve(mock.clone()).await;
    let backend = HttpChatBackend::new(HttpChatSettings {
        base_url: base,
        model: "test-model".into(),
        api_key: "sk-test".into(),
        temperature: 0.0,
        timeout: Duration::from_secs(5),
    })
    .unwrap();
    let prompts = vec![
        prompt("1", "plain"),
        prompt("2", "flaky"),
        prompt("3", "busy"),
        prompt("4", "denied"),
        prompt("5", "garbled"),
    ];
    let mut opts = DispatchOptions::new(ParseMode::SingleWord);
    opts.retry = quick_retry(3);
    opts.max_concurrency = 2;
    let out = predict_labels(&prompts, &backend, Vec::new(), &opts)
        .await
        .unwrap();

    let ids: Vec<&str> = out.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["1", "2"]);
    assert!(out
        .records
        .iter()
        .all(|r| r.label == StanceLabel::Favor && r.status == ParseStatus::Ok));
    let failed: HashMap<&str, u32> = out
        .failed
        .iter()
        .map(|f| (f.id.as_str(), f.attempts))
        .collect();
    assert_eq!(failed, HashMap::from([("3", 3), ("4", 1), ("5", 1)]));
    assert!(out.failed.iter().any(|f| f.reason.contains("429")));

    let calls = mock.calls.lock().unwrap().clone();
    assert_eq!(calls["plain"], 1);
    assert_eq!(calls["flaky"], 2);
    assert_eq!(calls["busy"], 3);
    assert_eq!(calls["denied"], 1);
    assert_eq!(out.backend_calls, 1 + 2 + 3 + 1 + 1);

    for (auth, body) in mock.seen.lock().unwrap().iter() {
        assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
    }
}

/// Answers with the gold word after a pseudo-random delay.
struct Jittery;

#[async_trait]
impl Backend for Jittery {
    fn identity(&self) -> String {
        "jittery".into()
    }

    async fn complete(&self, id: &str, _prompt: &str) -> Result<String, BackendError> {
        let n: u64 = id.parse().unwrap();
        tokio::time::sleep(Duration::from_millis((n * 7919) % 13)).await;
        Ok(["against", "in-favor", "neutral-or-unclear"][(n % 3) as usize].into())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_dispatch_keeps_input_order() {
    let prompts: Vec<_> = (0..60).map(|i| prompt(&i.to_string(), "p")).collect();
    let mut opts = DispatchOptions::new(ParseMode::SingleWord);
    opts.max_concurrency = 8;
    let out = predict_labels(&prompts, &Jittery, Vec::new(), &opts)
        .await
        .unwrap();
    let ids: Vec<String> = out.records.iter().map(|r| r.id.clone()).collect();
    let expected: Vec<String> = (0..60).map(|i| i.to_string()).collect();
    assert_eq!(ids, expected);
    for r in &out.records {
        let n: usize = r.id.parse().unwrap();
        assert_eq!(r.label, StanceLabel::ALL[n % 3]);
    }
}

#[tokio::test]
async fn duplicate_prompt_ids_are_rejected() {
    let prompts = vec![prompt("1", "a"), prompt("1", "b")];
    let opts = DispatchOptions::new(ParseMode::SingleWord);
    assert!(predict_labels(&prompts, &Jittery, Vec::new(), &opts)
        .await
        .is_err());
}

fn preprocessed(dir: &std::path::Path) -> RunConfig {
    let raw = common::write_synthetic_raw(&dir.join("raw"));
    let mut cfg = RunConfig::default();
    cfg.paths.raw_train = raw.train;
    cfg.paths.raw_test = raw.test;
    cfg.paths.workdir = dir.join("work");
    commands::cmd_preprocess(&cfg).unwrap();
    cfg
}

fn replay_for(cfg: &RunConfig, dir: &std::path::Path) -> ReplayBackend {
    let corpus = commands::load_corpus(cfg).unwrap();
    let path = dir.join(format!("responses_{}.csv", cfg.prompt_kind));
    common::write_replay_responses(&path, &corpus, cfg.prompt_kind, 11);
    ReplayBackend::from_csv(&path).unwrap()
}

#[tokio::test]
async fn rerun_reuses_predictions_and_fresh_sets_them_aside() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preprocessed(dir.path());
    let backend = replay_for(&cfg, dir.path());

    let first = commands::cmd_predict_with(&cfg, &backend, CachePolicy::Resume)
        .await
        .unwrap();
    assert_eq!(first.records, 399);
    assert_eq!(backend.calls(), 399);
    let bytes = fs::read(&first.predictions_path).unwrap();

    let second = commands::cmd_predict_with(&cfg, &backend, CachePolicy::Resume)
        .await
        .unwrap();
    assert_eq!(backend.calls(), 399);
    assert_eq!((second.cache_hits, second.backend_calls), (399, 0));
    assert_eq!(fs::read(&first.predictions_path).unwrap(), bytes);

    let third = commands::cmd_predict_with(&cfg, &backend, CachePolicy::Fresh)
        .await
        .unwrap();
    assert_eq!(third.backend_calls, 399);
    let cached = cached_path(&first.predictions_path);
    assert_eq!(fs::read(&cached).unwrap(), bytes);
    assert_eq!(fs::read(&first.predictions_path).unwrap(), bytes);

    // a second fresh start would overwrite the set-aside file
    let err = commands::cmd_predict_with(&cfg, &backend, CachePolicy::Fresh)
        .await
        .unwrap_err();
    assert!(err.to_string().contains("predictions_cached.csv"), "{err}");

    fs::remove_file(&first.predictions_path).unwrap();
    let restored = commands::cmd_predict_with(&cfg, &backend, CachePolicy::Restore)
        .await
        .unwrap();
    assert_eq!(restored.backend_calls, 0);
    assert!(!cached.exists());
    assert_eq!(fs::read(&first.predictions_path).unwrap(), bytes);

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(first.run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["predict"]["backend_calls"], 0);
    assert_eq!(manifest["prompt_kind"], "zero_shot");
    let prompts_csv = fs::read_to_string(first.run_dir.join("prompts.csv")).unwrap();
    assert!(prompts_csv.starts_with("ID,tweet_embedded\n"));
}

/// Fails a fixed set of IDs, answers the rest like the wrapped backend.
struct Partial<'a> {
    inner: &'a ReplayBackend,
    broken: Vec<String>,
}

#[async_trait]
impl Backend for Partial<'_> {
    fn identity(&self) -> String {
        "partial".into()
    }

    async fn complete(&self, id: &str, prompt: &str) -> Result<String, BackendError> {
        if self.broken.iter().any(|b| b == id) {
            return Err(BackendError::Fatal("HTTP 400".into()));
        }
        self.inner.complete(id, prompt).await
    }
}

#[tokio::test]
async fn failed_prompts_are_reported_and_retried_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preprocessed(dir.path());
    cfg.prompt_kind = PromptKind::Cot;
    let replay = replay_for(&cfg, dir.path());
    let corpus = commands::load_corpus(&cfg).unwrap();
    let broken: Vec<String> = commands::build_run_prompts(&cfg, &corpus).unwrap().prompts[..3]
        .iter()
        .map(|p| p.record_id.clone())
        .collect();
    let partial = Partial {
        inner: &replay,
        broken: broken.clone(),
    };

    let err = commands::cmd_predict_with(&cfg, &partial, CachePolicy::Resume)
        .await
        .unwrap_err();
    match err {
        CommandError::FailedPrompts(ids) => assert_eq!(ids, broken),
        other => panic!("unexpected error: {other}"),
    }
    let path = cfg.run_dir().join("predictions.csv");
    let written = fs::read_to_string(&path).unwrap();
    assert_eq!(
        written
            .lines()
            .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
            .count(),
        396
    );

    let report = commands::cmd_predict_with(&cfg, &replay, CachePolicy::Resume)
        .await
        .unwrap();
    assert_eq!(
        (report.records, report.cache_hits, report.backend_calls),
        (399, 396, 3)
    );
}

#[tokio::test]
async fn replay_miss_aborts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preprocessed(dir.path());
    let empty = ReplayBackend::new(HashMap::new());
    let err = commands::cmd_predict_with(&cfg, &empty, CachePolicy::Resume)
        .await
        .unwrap_err();
    assert!(err.to_string().contains("has no response for ID"), "{err}");
}

#[test]
fn cost_estimate_scales_with_prompt_family() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preprocessed(dir.path());
    let mut totals = Vec::new();
    for kind in PromptKind::ALL {
        cfg.prompt_kind = kind;
        totals.push(commands::cmd_estimate_cost(&cfg).unwrap().total_usd);
    }
    let reference = 0.19196200000000002;
    assert!(
        (totals[0] - reference).abs() <= 0.3 * reference,
        "zero-shot {}",
        totals[0]
    );
    assert!(totals[1] > totals[0] && totals[2] > totals[0], "{totals:?}");
}
