//! Confusion matrices, per-class precision/recall/F1 and macro-F1.
//!
//! Rows are gold labels and columns are predictions, both in canonical label
//! order. Any 0/0 ratio is defined as 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::corpus::Record;
use crate::label::{Partition, StanceLabel};
use crate::predictions::PredictionRecord;

pub const METRICS_HEADER: [&str; 13] = [
    "set",
    "precision_AGAINST",
    "recall_AGAINST",
    "f1_AGAINST",
    "precision_FAVOR",
    "recall_FAVOR",
    "f1_FAVOR",
    "precision_NONE",
    "recall_NONE",
    "f1_NONE",
    "f1_macro",
    "n",
    "fallback_none",
];

pub const CONFUSION_HEADER: [&str; 4] = ["set", "true_label", "predicted_label", "count"];

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("gold and predicted label lists differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("cannot build a confusion matrix from zero records")]
    Empty,
    #[error("{} record(s) have no prediction: {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("conflicting predictions for ID {0}")]
    ConflictingPrediction(String),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    /// Builds the matrix from aligned gold/predicted lists.
    pub fn from_labels(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                gold: gold.len(),
                pred: pred.len(),
            });
        }
        if gold.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut m = ConfusionMatrix::default();
        for (&g, &p) in gold.iter().zip(pred) {
            m.add(g, p);
        }
        Ok(m)
    }

    pub fn add(&mut self, gold: StanceLabel, pred: StanceLabel) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn get(&self, gold: StanceLabel, pred: StanceLabel) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn counts(&self) -> [[u64; 3]; 3] {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Gold support of a class.
    pub fn row_sum(&self, gold: StanceLabel) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    /// Number of times a class was predicted.
    pub fn col_sum(&self, pred: StanceLabel) -> u64 {
        self.counts.iter().map(|row| row[pred.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

/// Scales each row (or column) to sum to 100. All-zero lines stay zero.
pub fn normalize(m: &ConfusionMatrix, axis: Axis) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for g in StanceLabel::ALL {
        for p in StanceLabel::ALL {
            let denom = match axis {
                Axis::Row => m.row_sum(g),
                Axis::Column => m.col_sum(p),
            };
            out[g.index()][p.index()] = ratio(m.get(g, p), denom) * 100.0;
        }
    }
    out
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    /// Indexed by canonical label order.
    pub per_class: [ClassScores; 3],
    pub f1_macro: f64,
}

impl Scores {
    pub fn class(&self, label: StanceLabel) -> ClassScores {
        self.per_class[label.index()]
    }
}

pub fn f1_scores(m: &ConfusionMatrix) -> Scores {
    let mut per_class = [ClassScores::default(); 3];
    for label in StanceLabel::ALL {
        let tp = m.get(label, label);
        let precision = ratio(tp, m.col_sum(label));
        let recall = ratio(tp, m.row_sum(label));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class[label.index()] = ClassScores {
            precision,
            recall,
            f1,
        };
    }
    let f1_macro = per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
    Scores {
        per_class,
        f1_macro,
    }
}

/// Scores for one partition of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub partition: Partition,
    pub scores: Scores,
    pub n: u64,
    pub fallback_none: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    pub report: MetricsReport,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEvaluation {
    pub partitions: Vec<PartitionResult>,
    /// In-scope IDs skipped because of the exclusion set.
    pub excluded: Vec<String>,
    /// Prediction IDs that matched no corpus record.
    pub unknown_ids: Vec<String>,
}

/// Scores a prediction set against the gold corpus, one report per requested
/// partition that has at least one in-scope record.
pub fn evaluate_run(
    predictions: &[PredictionRecord],
    corpus: &[Record],
    partitions: &[Partition],
    exclusions: &BTreeSet<String>,
) -> Result<RunEvaluation> {
    let mut by_id: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for p in predictions {
        if let Some(prev) = by_id.insert(p.id.as_str(), p) {
            if prev.label != p.label {
                return Err(MetricsError::ConflictingPrediction(p.id.clone()));
            }
        }
    }

    let known: BTreeSet<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
    let unknown_ids: Vec<String> = by_id
        .keys()
        .filter(|id| !known.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !unknown_ids.is_empty() {
        log::warn!(
            "ignoring {} prediction(s) with IDs not in the corpus",
            unknown_ids.len()
        );
    }

    let mut excluded = Vec::new();
    let mut missing = Vec::new();
    let mut results = Vec::new();
    // upsampled corpora repeat IDs; score each ID once per partition
    let mut seen = BTreeSet::new();
    for &partition in partitions {
        let mut matrix = ConfusionMatrix::default();
        let mut fallback_none = 0;
        for r in corpus.iter().filter(|r| r.partition == partition) {
            if !seen.insert((partition, r.id.as_str())) {
                continue;
            }
            if exclusions.contains(&r.id) {
                excluded.push(r.id.clone());
                continue;
            }
            match by_id.get(r.id.as_str()) {
                Some(p) => {
                    matrix.add(r.label, p.label);
                    if p.is_fallback() {
                        fallback_none += 1;
                    }
                }
                None => missing.push(r.id.clone()),
            }
        }
        if matrix.total() == 0 {
            log::warn!("no scorable records in the {partition} partition");
            continue;
        }
        results.push(PartitionResult {
            report: MetricsReport {
                partition,
                scores: f1_scores(&matrix),
                n: matrix.total(),
                fallback_none,
            },
            matrix,
        });
    }
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }
    if !excluded.is_empty() {
        log::info!("excluded {} record(s) from scoring", excluded.len());
    }
    Ok(RunEvaluation {
        partitions: results,
        excluded,
        unknown_ids,
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_metrics_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in reports {
        let mut row = vec![r.partition.as_str().to_string()];
        for label in StanceLabel::ALL {
            let c = r.scores.class(label);
            row.extend([c.precision, c.recall, c.f1].map(|v| v.to_string()));
        }
        row.push(r.scores.f1_macro.to_string());
        row.push(r.n.to_string());
        row.push(r.fallback_none.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a metrics file. The trailing `n` and `fallback_none` columns are
/// optional so files from other producers are accepted.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let malformed = |message: String| MetricsError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut positions = Vec::new();
    for name in &METRICS_HEADER[..11] {
        positions.push(column(name).ok_or_else(|| malformed(format!("missing column {name}")))?);
    }
    let n_at = column("n");
    let fallback_at = column("fallback_none");

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |at: usize| {
            row.get(at)
                .map(str::trim)
                .ok_or_else(|| malformed(format!("line {line}: too few fields")))
        };
        let float = |at: usize| -> Result<f64> {
            let s = field(at)?;
            let v: f64 = s
                .parse()
                .map_err(|_| malformed(format!("line {line}: {s:?} is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(malformed(format!("line {line}: score {v} outside [0, 1]")));
            }
            Ok(v)
        };
        let int = |at: Option<usize>| -> Result<u64> {
            match at {
                None => Ok(0),
                Some(at) => {
                    let s = field(at)?;
                    s.parse()
                        .map_err(|_| malformed(format!("line {line}: {s:?} is not a count")))
                }
            }
        };
        let set = field(positions[0])?;
        let partition = set
            .parse::<Partition>()
            .map_err(|e| malformed(format!("line {line}: {e}")))?;
        let mut per_class = [ClassScores::default(); 3];
        for (i, class) in per_class.iter_mut().enumerate() {
            *class = ClassScores {
                precision: float(positions[1 + 3 * i])?,
                recall: float(positions[2 + 3 * i])?,
                f1: float(positions[3 + 3 * i])?,
            };
        }
        out.push(MetricsReport {
            partition,
            scores: Scores {
                per_class,
                f1_macro: float(positions[10])?,
            },
            n: int(n_at)?,
            fallback_none: int(fallback_at)?,
        });
    }
    if out.is_empty() {
        return Err(malformed("no metric rows".to_string()));
    }
    Ok(out)
}

pub fn write_confusion_csv(path: &Path, results: &[PartitionResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONFUSION_HEADER)?;
    for r in results {
        for g in StanceLabel::ALL {
            for p in StanceLabel::ALL {
                w.write_record([
                    r.report.partition.as_str(),
                    g.as_str(),
                    p.as_str(),
                    &r.matrix.get(g, p).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a long-form confusion file into one matrix per partition, in
/// partition order.
pub fn read_confusion_csv(path: &Path) -> Result<Vec<(Partition, ConfusionMatrix)>> {
    let malformed = |message: String| MetricsError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    let mut at = [0usize; 4];
    for (slot, name) in at.iter_mut().zip(CONFUSION_HEADER) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| malformed(format!("missing column {name}")))?;
    }
    let mut by_partition: BTreeMap<Partition, ConfusionMatrix> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| {
            row.get(at[i])
                .map(str::trim)
                .ok_or_else(|| malformed(format!("line {line}: too few fields")))
        };
        let partition = get(0)?
            .parse::<Partition>()
            .map_err(|e| malformed(format!("line {line}: {e}")))?;
        let gold = get(1)?
            .parse::<StanceLabel>()
            .map_err(|e| malformed(format!("line {line}: {e}")))?;
        let pred = get(2)?
            .parse::<StanceLabel>()
            .map_err(|e| malformed(format!("line {line}: {e}")))?;
        let count: u64 = get(3)?
            .parse()
            .map_err(|_| malformed(format!("line {line}: bad count")))?;
        by_partition.entry(partition).or_default().counts[gold.index()][pred.index()] += count;
    }
    Ok(by_partition.into_iter().collect())
}
