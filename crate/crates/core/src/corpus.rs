//! Raw SemEval-style tweet ingestion, cleaning, partitioning and rebalancing.
//!
//! The raw files are tab-separated with the header `ID  Target  Tweet  Stance`.
//! Records for one topic are cleaned, deduplicated on `(tweet, label)`,
//! split 4:1 into train/vali, and the test file becomes the test partition.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::label::{Partition, StanceLabel};

/// Sentinel that replaces every user mention.
pub const USER_SENTINEL: &str = "@USERNAME";

/// Hashtag appended by the dataset owners to every tweet.
pub const MARKER_HASHTAG: &str = "#SemST";

/// One validation record per this many training-file records (train:vali = 4:1).
pub const VALI_DENOMINATOR: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: missing column {column:?} in header")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}:{line}: unknown stance {value:?}")]
    UnknownStance {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("topic {0:?} has no entry in the topic map")]
    UnknownTopic(String),
    #[error("unknown text encoding {0:?}")]
    UnknownEncoding(String),
    #[error("too few records to split: {0} (need at least {VALI_DENOMINATOR})")]
    TooFewRecords(usize),
    #[error("cannot upsample: no {0} records in the training split")]
    EmptyClass(StanceLabel),
    #[error("upsampling factor must be at least 1")]
    ZeroFactor,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Maps short topic keys (e.g. `Abortion`) to the dataset's `Target` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicMap(BTreeMap<String, String>);

impl Default for TopicMap {
    fn default() -> Self {
        let entries = [
            ("Abortion", "Legalization of Abortion"),
            ("Atheism", "Atheism"),
            ("Climate", "Climate Change is a Real Concern"),
            ("Feminism", "Feminist Movement"),
            ("Hillary", "Hillary Clinton"),
        ];
        TopicMap(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

impl TopicMap {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        TopicMap(entries)
    }

    pub fn target(&self, topic: &str) -> Result<&str> {
        self.0
            .get(topic)
            .map(String::as_str)
            .ok_or_else(|| CorpusError::UnknownTopic(topic.to_string()))
    }

    pub fn insert(&mut self, topic: impl Into<String>, target: impl Into<String>) {
        self.0.insert(topic.into(), target.into());
    }
}

/// How to decode input bytes: UTF-8 first, then a single-byte fallback with
/// lossy replacement.
#[derive(Debug, Clone, Copy)]
pub struct EncodingPolicy {
    fallback: &'static encoding_rs::Encoding,
}

impl Default for EncodingPolicy {
    fn default() -> Self {
        EncodingPolicy {
            fallback: encoding_rs::WINDOWS_1252,
        }
    }
}

impl EncodingPolicy {
    pub fn with_fallback(label: &str) -> Result<Self> {
        encoding_rs::Encoding::for_label(label.as_bytes())
            .map(|fallback| EncodingPolicy { fallback })
            .ok_or_else(|| CorpusError::UnknownEncoding(label.to_string()))
    }

    pub fn fallback_name(&self) -> &'static str {
        self.fallback.name()
    }

    pub fn decode(&self, bytes: &[u8]) -> String {
        let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
        match std::str::from_utf8(bytes) {
            Ok(s) => s.to_string(),
            Err(_) => {
                log::warn!(
                    "input is not valid UTF-8, decoding as {}",
                    self.fallback.name()
                );
                let (text, _, _) = self.fallback.decode(bytes);
                text.into_owned()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFile {
    TrainFile,
    TestFile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub target: String,
    pub tweet: String,
    pub stance: StanceLabel,
}

/// A cleaned tweet that has not been assigned to a partition yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanRecord {
    pub id: String,
    pub tweet: String,
    pub topic: String,
    pub label: StanceLabel,
}

/// A cleaned, partitioned tweet; the unit that flows through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    #[serde(rename = "ID")]
    pub id: String,
    pub tweet: String,
    pub topic: String,
    pub label: StanceLabel,
    pub partition: Partition,
}

const RAW_COLUMNS: [&str; 4] = ["ID", "Target", "Tweet", "Stance"];

/// Reads one raw TSV file and keeps the records whose `Target` matches the
/// topic, in file order.
pub fn load_raw_dataset(
    path: &Path,
    which: SourceFile,
    topic: &str,
    topics: &TopicMap,
    encoding: &EncodingPolicy,
) -> Result<Vec<RawRecord>> {
    let target = topics.target(topic)?;
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = encoding.decode(&bytes);
    let records = parse_raw_tsv(&text, path)?
        .into_iter()
        .filter(|r| r.target == target)
        .collect::<Vec<_>>();
    let kind = match which {
        SourceFile::TrainFile => "training",
        SourceFile::TestFile => "test",
    };
    log::info!(
        "number of tweets in the {kind} data: {} ({})",
        records.len(),
        path.display()
    );
    Ok(records)
}

fn parse_raw_tsv(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut positions = [0usize; 4];
    for (slot, column) in positions.iter_mut().zip(RAW_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column,
            })?;
    }
    let [id_at, target_at, tweet_at, stance_at] = positions;

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |at: usize| {
            row.get(at).ok_or_else(|| CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            })
        };
        let id = field(id_at)?.trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "empty ID".to_string(),
            });
        }
        let stance_raw = field(stance_at)?.trim();
        let stance = stance_raw
            .parse::<StanceLabel>()
            .map_err(|_| CorpusError::UnknownStance {
                path: path.to_path_buf(),
                line,
                value: stance_raw.to_string(),
            })?;
        out.push(RawRecord {
            id,
            target: field(target_at)?.trim().to_string(),
            tweet: field(tweet_at)?.to_string(),
            stance,
        });
    }
    Ok(out)
}

static RETWEET_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*RT\s+@\w+:?\s*").unwrap());
static MARKER_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s*#semst\s*$").unwrap());
static ESCAPED_QUOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"\\+['"]"#).unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());

/// Normalizes one raw tweet.
///
/// Strips leading retweet markers, drops the trailing marker hashtag, turns
/// escaped and double quotes into single quotes, lowercases, replaces every
/// mention with [`USER_SENTINEL`] and collapses whitespace. Other hashtags are
/// kept. Mentions are replaced after lowercasing so the sentinel keeps its
/// case.
pub fn clean_tweet(raw: &str) -> String {
    let mut text = raw.to_string();
    while let Some(m) = RETWEET_PREFIX.find(&text) {
        text.replace_range(..m.end(), "");
    }
    while let Some(m) = MARKER_SUFFIX.find(&text) {
        text.truncate(m.start());
    }
    let text = ESCAPED_QUOTE.replace_all(&text, "'").replace('"', "'");
    let text = text.to_lowercase();
    let text = MENTION.replace_all(&text, USER_SENTINEL);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cleans the raw records of one topic.
pub fn clean_records(raw: &[RawRecord], topic: &str) -> Vec<CleanRecord> {
    raw.iter()
        .map(|r| CleanRecord {
            id: r.id.clone(),
            tweet: clean_tweet(&r.tweet),
            topic: topic.to_string(),
            label: r.stance,
        })
        .collect()
}

/// Drops records whose cleaned `(tweet, label)` pair already appeared,
/// keeping the first occurrence. Returns the survivors and the drop count.
pub fn dedup_records(records: Vec<CleanRecord>) -> (Vec<CleanRecord>, usize) {
    let before = records.len();
    let mut seen = HashSet::new();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| seen.insert((r.tweet.clone(), r.label)))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Number of validation records for `n` training-file records, `round(n / 5)`.
pub fn vali_size(n: usize) -> usize {
    (n + VALI_DENOMINATOR / 2) / VALI_DENOMINATOR
}

/// Assigns training-file records to TRAIN/VALI by seeded uniform sampling
/// (not stratified) and every test-file record to TEST.
///
/// Output keeps input order: training-file records first, then test records.
pub fn partition_dataset(
    train_file: Vec<CleanRecord>,
    test_file: Vec<CleanRecord>,
    seed: u64,
) -> Result<Vec<Record>> {
    let n = train_file.len();
    if n < VALI_DENOMINATOR {
        return Err(CorpusError::TooFewRecords(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vali: HashSet<usize> = index::sample(&mut rng, n, vali_size(n))
        .into_iter()
        .collect();

    let assigned = train_file.into_iter().enumerate().map(|(i, r)| {
        let partition = if vali.contains(&i) {
            Partition::Vali
        } else {
            Partition::Train
        };
        with_partition(r, partition)
    });
    let test = test_file
        .into_iter()
        .map(|r| with_partition(r, Partition::Test));
    Ok(assigned.chain(test).collect())
}

fn with_partition(r: CleanRecord, partition: Partition) -> Record {
    Record {
        id: r.id,
        tweet: r.tweet,
        topic: r.topic,
        label: r.label,
        partition,
    }
}

/// Balances the training split by sampling each class with replacement until
/// every class holds `factor` times the largest original class count.
///
/// Original records come first, in input order, followed by the added
/// duplicates grouped by class in canonical order.
pub fn upsample_balanced(train: &[Record], seed: u64, factor: usize) -> Result<Vec<Record>> {
    if factor == 0 {
        return Err(CorpusError::ZeroFactor);
    }
    let mut by_class: [Vec<&Record>; 3] = Default::default();
    for r in train {
        by_class[r.label.index()].push(r);
    }
    for label in StanceLabel::ALL {
        if by_class[label.index()].is_empty() {
            return Err(CorpusError::EmptyClass(label));
        }
    }
    let target = factor * by_class.iter().map(Vec::len).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = train.to_vec();
    for pool in &by_class {
        for _ in pool.len()..target {
            let pick = pool[rng.gen_range(0..pool.len())];
            out.push(pick.clone());
        }
    }
    Ok(out)
}

/// Record counts per partition and label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelDistribution {
    counts: [[usize; 3]; 3],
}

impl LabelDistribution {
    pub fn get(&self, partition: Partition, label: StanceLabel) -> usize {
        self.counts[partition as usize][label.index()]
    }

    pub fn partition_total(&self, partition: Partition) -> usize {
        self.counts[partition as usize].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Counts for one partition in canonical label order.
    pub fn row(&self, partition: Partition) -> [usize; 3] {
        self.counts[partition as usize]
    }
}

impl fmt::Display for LabelDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:<10}{:>6}", "partition", "label", "count")?;
        for partition in Partition::ALL {
            for label in StanceLabel::ALL {
                writeln!(
                    f,
                    "{:<10}{:<10}{:>6}",
                    partition.as_str(),
                    label.as_str(),
                    self.get(partition, label)
                )?;
            }
        }
        Ok(())
    }
}

pub fn label_distribution<'a>(records: impl IntoIterator<Item = &'a Record>) -> LabelDistribution {
    let mut dist = LabelDistribution::default();
    for r in records {
        dist.counts[r.partition as usize][r.label.index()] += 1;
    }
    dist
}

/// Outcome of the full preprocessing stage for one topic.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub records: Vec<Record>,
    pub raw_train: usize,
    pub raw_test: usize,
    pub dropped_train: usize,
    pub dropped_test: usize,
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions<'a> {
    pub topic: &'a str,
    pub topics: &'a TopicMap,
    pub encoding: EncodingPolicy,
    pub seed: u64,
}

/// Load, clean, deduplicate and partition both raw files.
pub fn prepare_corpus(
    raw_train: &Path,
    raw_test: &Path,
    opts: &PreprocessOptions<'_>,
) -> Result<PreparedCorpus> {
    let train = load_raw_dataset(
        raw_train,
        SourceFile::TrainFile,
        opts.topic,
        opts.topics,
        &opts.encoding,
    )?;
    let test = load_raw_dataset(
        raw_test,
        SourceFile::TestFile,
        opts.topic,
        opts.topics,
        &opts.encoding,
    )?;
    let (train_clean, dropped_train) = dedup_records(clean_records(&train, opts.topic));
    let (test_clean, dropped_test) = dedup_records(clean_records(&test, opts.topic));
    if dropped_train + dropped_test > 0 {
        log::info!(
            "dropped duplicate (tweet, label) pairs: {dropped_train} from training file, {dropped_test} from test file"
        );
    }
    let records = partition_dataset(train_clean, test_clean, opts.seed)?;
    Ok(PreparedCorpus {
        records,
        raw_train: train.len(),
        raw_test: test.len(),
        dropped_train,
        dropped_test,
    })
}

/// Writes `ID,tweet,topic,label,partition` with minimal quoting.
pub fn write_corpus_csv(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn write_partitions_csv(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ID", "partition"])?;
    for r in records {
        w.write_record([r.id.as_str(), r.partition.as_str()])?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn read_corpus_csv(path: &Path) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
