//! Shared helpers for integration tests: a synthetic raw corpus with the same
//! shape as the Abortion split (603 train rows, 280 test rows, a handful of
//! exact duplicates) and the frozen replay fixtures.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stance_core::prompts::prompt_word;
use stance_core::{Partition, PromptKind, Record, RunConfig, StanceLabel};

pub const TARGET: &str = "Legalization of Abortion";

/// Unique (AGAINST, FAVOR, NONE) counts after deduplication.
pub const TRAIN_UNIQUE: [usize; 3] = [334, 104, 162];
pub const TEST_UNIQUE: [usize; 3] = [188, 46, 45];
pub const TRAIN_DUPLICATES: usize = 3;
pub const TEST_DUPLICATES: usize = 1;

pub const RAW_GOLDEN_1: &str = "RT @createdequalorg: \"We're all human, aren't we? Every human life is worth the same, and worth saving.\" -J.K. Rowling #… #SemST";
pub const CLEAN_GOLDEN_1: &str = "'we're all human, aren't we? every human life is worth the same, and worth saving.' -j.k. rowling #…";
pub const RAW_GOLDEN_2: &str = "Follow #Patriot --> @Enuffis2Much.  Thanks for following back!!  #Truth #Liberty #Justice #ProIsrael #WakeUpAmerica #FreeAmirNow #SemST";
pub const CLEAN_GOLDEN_2: &str = "follow #patriot --> @USERNAME. thanks for following back!! #truth #liberty #justice #proisrael #wakeupamerica #freeamirnow";

pub const EXAMPLE_TWEET: &str = "i really don't understand how some people are pro-choice. a life is a life no matter if it's 2 weeks old or 20 years old.";
pub const UTERUS_TWEET: &str =
    "dear religious right: i keep my uterus out of your church, so keep your church out my uterus.";

const WORDS: &[&str] = &[
    "Life", "choice", "women", "rights", "baby", "every", "body", "should", "decide", "never",
    "freedom", "God", "law", "Court", "vote", "today", "think", "people", "really", "health",
    "mother", "future", "human", "protect", "support", "believe", "matter", "stand", "care",
    "family",
];
const TAGS: &[&str] = &[
    "#prolife",
    "#ProChoice",
    "#SCOTUS",
    "#Equality",
    "#faith",
    "#WomensRights",
];

fn synthetic_tweet(rng: &mut ChaCha8Rng, serial: usize) -> String {
    let mut parts: Vec<String> = Vec::new();
    if rng.gen_bool(0.1) {
        parts.push(format!("RT @Handle{}:", rng.gen_range(1..500)));
    }
    let target_len = rng.gen_range(80..115);
    let mut len = 0;
    while len < target_len {
        let piece = match rng.gen_range(0..20) {
            0 => format!("@user_{}", rng.gen_range(1..900)),
            1 => TAGS.choose(rng).unwrap().to_string(),
            2 => "😀".to_string(),
            _ => WORDS.choose(rng).unwrap().to_string(),
        };
        len += piece.len() + 1;
        parts.push(piece);
    }
    parts.push(format!("no{serial}"));
    parts.push("#SemST".to_string());
    parts.join(" ")
}

struct Row {
    id: String,
    target: String,
    tweet: String,
    stance: StanceLabel,
}

fn build_rows(
    rng: &mut ChaCha8Rng,
    unique: [usize; 3],
    duplicates: usize,
    id_base: usize,
    specials: &[(&str, StanceLabel)],
) -> Vec<Row> {
    let mut labels: Vec<StanceLabel> = StanceLabel::ALL
        .iter()
        .zip(unique)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect();
    labels.shuffle(rng);
    let mut tweets: Vec<String> = (0..labels.len())
        .map(|i| synthetic_tweet(rng, id_base + i))
        .collect();
    let mut used = vec![false; labels.len()];
    for (text, label) in specials {
        let slot = (0..labels.len())
            .find(|&i| labels[i] == *label && !used[i])
            .unwrap();
        used[slot] = true;
        tweets[slot] = text.to_string();
    }
    let mut rows: Vec<Row> = labels
        .into_iter()
        .zip(tweets)
        .map(|(stance, tweet)| Row {
            id: String::new(),
            target: TARGET.to_string(),
            tweet,
            stance,
        })
        .collect();
    for _ in 0..duplicates {
        let src = rng.gen_range(0..rows.len());
        let at = rng.gen_range(src + 1..=rows.len());
        let dup = Row {
            id: String::new(),
            target: TARGET.to_string(),
            tweet: rows[src].tweet.clone(),
            stance: rows[src].stance,
        };
        rows.insert(at, dup);
    }
    for i in 0..12 {
        let at = rng.gen_range(0..=rows.len());
        rows.insert(
            at,
            Row {
                id: String::new(),
                target: "Atheism".to_string(),
                tweet: format!("unrelated target tweet {i} #SemST"),
                stance: StanceLabel::ALL[i % 3],
            },
        );
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row.id = (id_base + i).to_string();
    }
    rows
}

fn write_tsv(path: &Path, rows: &[Row]) {
    let mut text = String::from("ID\tTarget\tTweet\tStance\n");
    for r in rows {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.id, r.target, r.tweet, r.stance
        ));
    }
    fs::write(path, text).unwrap();
}

#[derive(Debug, Clone)]
pub struct RawFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Writes `raw_train.tsv` and `raw_test.tsv` into `dir`. Deterministic.
pub fn write_synthetic_raw(dir: &Path) -> RawFiles {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raw_example = "I really don't understand how some people are pro-choice. A life is a life no matter if it's 2 weeks old or 20 years old. #SemST";
    let train_specials = [
        (RAW_GOLDEN_1, StanceLabel::Against),
        (RAW_GOLDEN_2, StanceLabel::None),
        (raw_example, StanceLabel::Against),
        (
            "It's a free country. Freedom includes freedom of choice. #SemST",
            StanceLabel::Favor,
        ),
        ("So ready for my abortion debate #SemST", StanceLabel::None),
    ];
    let test_specials = [(
        "Dear religious right: I keep my uterus out of your church, so keep your church out my uterus. #SemST",
        StanceLabel::Favor,
    )];
    let train = build_rows(&mut rng, TRAIN_UNIQUE, TRAIN_DUPLICATES, 1, &train_specials);
    let test = build_rows(
        &mut rng,
        TEST_UNIQUE,
        TEST_DUPLICATES,
        10001,
        &test_specials,
    );
    fs::create_dir_all(dir).unwrap();
    let files = RawFiles {
        train: dir.join("raw_train.tsv"),
        test: dir.join("raw_test.tsv"),
    };
    write_tsv(&files.train, &train);
    write_tsv(&files.test, &test);
    files
}

/// Replay responses for every validation/test record: mostly the gold word,
/// some deliberate mistakes and some unparseable answers.
pub fn write_replay_responses(path: &Path, corpus: &[Record], kind: PromptKind, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["ID", "response"]).unwrap();
    for r in corpus.iter().filter(|r| r.partition != Partition::Train) {
        let label = if rng.gen_bool(0.7) {
            r.label
        } else {
            *StanceLabel::ALL.choose(&mut rng).unwrap()
        };
        let word = prompt_word(label);
        let response = match (kind, rng.gen_range(0..10)) {
            (_, 0) => "I am not able to determine that.".to_string(),
            (PromptKind::Cot, _) => format!(
                "The tweeter mentions several things.\nTherefore the stance of the tweet is '{word}'."
            ),
            (_, 1) => format!(" {word}."),
            _ => word.to_string(),
        };
        w.write_record([r.id.as_str(), response.as_str()]).unwrap();
    }
    w.flush().unwrap();
}

/// Works from any crate in the workspace.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            fs::copy(entry.path(), to).unwrap();
        }
    }
}

/// One published run: directory names and, per partition, the confusion
/// counts (rows gold, columns predicted) behind the published per-class F1.
pub struct PublishedRun {
    pub model_type: &'static str,
    pub prompt: PromptKind,
    pub vali: [[u64; 3]; 3],
    pub test: [[u64; 3]; 3],
    /// (f1_macro, f1_NONE, f1_FAVOR, f1_AGAINST) as printed, vali then test.
    pub vali_scores: [f64; 4],
    pub test_scores: [f64; 4],
}

pub fn published_runs() -> Vec<PublishedRun> {
    use PromptKind::{Cot, FewShot, ZeroShot};
    let run = |model_type, prompt, vali, test, vali_scores, test_scores| PublishedRun {
        model_type,
        prompt,
        vali,
        test,
        vali_scores,
        test_scores,
    };
    vec![
        run(
            "llm_chatgpt_turbo_3_5",
            ZeroShot,
            [[27, 12, 28], [0, 17, 4], [0, 1, 31]],
            [[49, 32, 107], [0, 40, 6], [0, 1, 44]],
            [0.631255, 0.652632, 0.666667, 0.574468],
            [0.507138, 0.435644, 0.672269, 0.413502],
        ),
        run(
            "llm_chatgpt_turbo_3_5",
            FewShot,
            [[46, 12, 9], [0, 20, 1], [3, 1, 28]],
            [[96, 37, 55], [0, 44, 2], [2, 3, 40]],
            [0.777948, 0.8, 0.740741, 0.793103],
            [0.637211, 0.563380, 0.676923, 0.671329],
        ),
        run(
            "llm_chatgpt_turbo_3_5",
            Cot,
            [[13, 7, 47], [0, 10, 11], [0, 1, 31]],
            [[25, 22, 141], [0, 27, 19], [0, 0, 45]],
            [0.450072, 0.512397, 0.512821, 0.325],
            [0.387721, 0.36, 0.568421, 0.234742],
        ),
        run(
            "llm_flan-t5-large",
            ZeroShot,
            [[24, 43, 0], [10, 11, 0], [4, 27, 1]],
            [[58, 130, 0], [25, 21, 0], [9, 35, 1]],
            [0.244478, 0.060606, 0.215686, 0.457143],
            [0.212933, 0.043478, 0.181034, 0.414286],
        ),
        run(
            "llm_flan-t5-large",
            FewShot,
            [[34, 33, 0], [13, 8, 0], [10, 21, 1]],
            [[88, 100, 0], [26, 19, 1], [17, 26, 2]],
            [0.267255, 0.060606, 0.192771, 0.548387],
            [0.278003, 0.083333, 0.198953, 0.551724],
        ),
        run(
            "llm_flan-t5-xxl",
            ZeroShot,
            [[57, 10, 0], [1, 17, 3], [13, 4, 15]],
            [[124, 48, 16], [5, 34, 7], [17, 0, 28]],
            [0.693311, 0.6, 0.653846, 0.826087],
            [0.619033, 0.583333, 0.531250, 0.742515],
        ),
        run(
            "llm_flan-t5-xxl",
            FewShot,
            [[53, 14, 0], [2, 16, 3], [13, 2, 17]],
            [[119, 48, 21], [5, 33, 8], [18, 0, 27]],
            [0.680935, 0.653846, 0.603774, 0.785185],
            [0.591850, 0.534653, 0.519685, 0.721212],
        ),
    ]
}

/// Test-partition ranking of the published comparison table.
pub const PUBLISHED_TEST_ORDER: [(&str, &str); 7] = [
    ("llm_chatgpt_turbo_3_5", "few_shot"),
    ("llm_flan-t5-xxl", "zero_shot"),
    ("llm_flan-t5-xxl", "few_shot"),
    ("llm_chatgpt_turbo_3_5", "zero_shot"),
    ("llm_chatgpt_turbo_3_5", "CoT"),
    ("llm_flan-t5-large", "few_shot"),
    ("llm_flan-t5-large", "zero_shot"),
];

/// Lays the replay fixture out as a workdir (`processed/corpus.csv` plus one
/// directory per run) and returns a config pointing at it.
pub fn stage_replay_workdir(workdir: &Path) -> RunConfig {
    let src = fixtures_dir().join("replay");
    fs::create_dir_all(workdir.join("processed")).unwrap();
    fs::copy(src.join("corpus.csv"), workdir.join("processed/corpus.csv")).unwrap();
    for run in published_runs() {
        let rel = Path::new(run.model_type).join(run.prompt.as_str());
        copy_dir(&src.join(&rel), &workdir.join(&rel));
    }
    let mut cfg = RunConfig::default();
    cfg.paths.workdir = workdir.to_path_buf();
    cfg
}

/// Largest gap between a computed score and its six-decimal printed value
/// that rounding can explain.
pub const PRINTED_TOLERANCE: f64 = 5e-7 + 1e-12;
