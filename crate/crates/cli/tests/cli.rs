#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
model_type = \"llm_offline\"

[paths]
raw_train = \"raw/raw_train.tsv\"
raw_test = \"raw/raw_test.tsv\"
workdir = \"work\"
";

fn stance(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stance"))
        .current_dir(dir)
        .args(["--config", "run.toml"])
        .args(args)
        .env("RUST_LOG", "warn")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workspace(with_raw: bool) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    if with_raw {
        common::write_synthetic_raw(&dir.path().join("raw"));
    }
    dir
}

#[test]
fn missing_raw_file_fails_with_its_path() {
    let dir = workspace(false);
    let out = stance(dir.path(), &["preprocess"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("raw_train.tsv"), "{}", stderr(&out));
}

#[test]
fn preprocess_is_reproducible() {
    let dir = workspace(true);
    let processed = dir.path().join("work/processed");
    let first = stance(dir.path(), &["preprocess"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(
        stdout.contains("duplicates dropped: 3 (training file), 1 (test file)"),
        "{stdout}"
    );
    let snapshot = |name: &str| fs::read(processed.join(name)).unwrap();
    let (corpus, parts) = (snapshot("corpus.csv"), snapshot("partitions.csv"));
    assert!(stance(dir.path(), &["preprocess"]).status.success());
    assert_eq!(snapshot("corpus.csv"), corpus);
    assert_eq!(snapshot("partitions.csv"), parts);

    assert!(stance(dir.path(), &["--seed", "7", "preprocess"])
        .status
        .success());
    assert_ne!(snapshot("partitions.csv"), parts);
}

#[test]
fn http_backend_without_key_fails_before_any_request() {
    let dir = workspace(true);
    assert!(stance(dir.path(), &["preprocess"]).status.success());
    let out = stance(dir.path(), &["predict"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("LLM_API_KEY"), "{}", stderr(&out));
    assert!(!dir
        .path()
        .join("work/llm_offline/zero_shot/predictions.csv")
        .exists());
}

#[test]
fn cost_estimate_is_printed() {
    let dir = workspace(true);
    assert!(stance(dir.path(), &["preprocess"]).status.success());
    let out = stance(dir.path(), &["--prompt", "CoT", "estimate-cost"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("Estimated total cost: $"))
        .unwrap();
    let usd: f64 = line
        .trim_start_matches("Estimated total cost: $")
        .parse()
        .unwrap();
    assert!(usd > 0.0);
}

#[test]
fn adapter_predictions_are_scored_on_test_only() {
    let dir = workspace(true);
    assert!(stance(dir.path(), &["preprocess"]).status.success());
    let corpus = fs::read_to_string(dir.path().join("work/processed/corpus.csv")).unwrap();
    let mut preds = String::from("ID,predicted_label\n");
    for row in csv::Reader::from_reader(corpus.as_bytes()).records() {
        let row = row.unwrap();
        if &row[4] == "test" {
            preds.push_str(&format!("{},{}\n", &row[0], &row[3]));
        }
    }
    let run = dir.path().join("work/bert-base-uncased/finetune");
    fs::create_dir_all(&run).unwrap();
    fs::write(run.join("predictions.csv"), preds).unwrap();

    let run_arg = run.to_string_lossy().into_owned();
    let out = stance(
        dir.path(),
        &["evaluate", "--run-dir", &run_arg, "--partitions", "test"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("test,1,1,1,1,"), "{}", lines[1]);

    let out = stance(dir.path(), &["summarize"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("work/summary/summary.csv")).unwrap();
    assert!(summary
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("bert-base-uncased,finetune,test,1,"));
}

#[test]
fn evaluate_without_predictions_names_the_file() {
    let dir = workspace(true);
    assert!(stance(dir.path(), &["preprocess"]).status.success());
    let out = stance(dir.path(), &["evaluate"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("predictions.csv"), "{}", stderr(&out));
}

#[test]
fn bad_arguments_are_rejected_by_the_parser() {
    let dir = workspace(false);
    let out = stance(dir.path(), &["--prompt", "two_shot", "preprocess"]);
    assert_eq!(out.status.code(), Some(2));
    let out = stance(dir.path(), &["predict", "--fresh", "--restore-cached"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn example_config_spells_out_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../stance.example.toml");
    let loaded = stance_core::RunConfig::load(&path).unwrap();
    let mut defaults = stance_core::RunConfig::default();
    defaults.resolve_paths(path.parent().unwrap());
    assert_eq!(loaded, defaults);
}
