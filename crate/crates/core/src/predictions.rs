//! Prediction files shared by every prediction source.
//!
//! Three layouts are read:
//! * `ID,stance_predicted,raw_response,parse_status`, written by this crate;
//! * `ID,stance_predicted` where the column holds the raw model answer, which
//!   is parsed on load;
//! * `ID,predicted_label` from the fine-tuning adapter, holding label strings.
//!
//! Extra columns such as `tweet_embedded` are ignored.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::label::StanceLabel;
use crate::parser::{extract_label_with, Extraction, ParseMode, ParseOptions, ParseStatus};
use crate::prompts::RenderedPrompt;

pub const PREDICTIONS_HEADER: [&str; 4] =
    ["ID", "stance_predicted", "raw_response", "parse_status"];

#[derive(Debug, thiserror::Error)]
pub enum PredictionsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: expected an ID column and one of stance_predicted or predicted_label")]
    UnknownLayout { path: PathBuf },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PredictionsError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub id: String,
    /// Backend text, kept byte for byte.
    pub raw_response: String,
    pub label: StanceLabel,
    pub status: ParseStatus,
}

impl PredictionRecord {
    pub fn from_response(
        id: impl Into<String>,
        raw: impl Into<String>,
        mode: ParseMode,
        opts: ParseOptions,
    ) -> Self {
        let raw = raw.into();
        let Extraction { label, status } = extract_label_with(&raw, mode, opts);
        PredictionRecord {
            id: id.into(),
            raw_response: raw,
            label,
            status,
        }
    }

    pub fn is_fallback(&self) -> bool {
        self.status == ParseStatus::FallbackNone
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PredictionsError + '_ {
    move |source| PredictionsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_predictions_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PREDICTIONS_HEADER)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            r.label.as_str(),
            r.raw_response.as_str(),
            r.status.as_str(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads predictions in any supported layout. `mode` and `opts` are only used
/// for files whose `stance_predicted` column holds raw answers.
pub fn read_predictions_csv(
    path: &Path,
    mode: ParseMode,
    opts: ParseOptions,
) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let id_at = column("ID").ok_or_else(|| PredictionsError::UnknownLayout {
        path: path.to_path_buf(),
    })?;
    let stance_at = column("stance_predicted");
    let label_at = column("predicted_label");
    let raw_at = column("raw_response");
    let status_at = column("parse_status");
    if stance_at.is_none() && label_at.is_none() {
        return Err(PredictionsError::UnknownLayout {
            path: path.to_path_buf(),
        });
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |message: String| PredictionsError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |at: usize| {
            row.get(at)
                .ok_or_else(|| malformed("too few fields".to_string()))
        };
        let id = field(id_at)?.trim().to_string();
        if id.is_empty() {
            return Err(malformed("empty ID".to_string()));
        }
        let exact_label = |s: &str| {
            s.trim()
                .parse::<StanceLabel>()
                .map_err(|e| malformed(e.to_string()))
        };

        let record = match (stance_at, raw_at, status_at) {
            (Some(s), Some(r), Some(st)) => PredictionRecord {
                id,
                label: exact_label(field(s)?)?,
                raw_response: field(r)?.to_string(),
                status: field(st)?.trim().parse().map_err(malformed)?,
            },
            (Some(s), _, _) => PredictionRecord::from_response(id, field(s)?, mode, opts),
            (None, _, _) => {
                let text = field(label_at.expect("checked above"))?;
                PredictionRecord {
                    id,
                    label: exact_label(text)?,
                    raw_response: text.to_string(),
                    status: ParseStatus::Ok,
                }
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// Writes the exact prompts sent to the backend as `ID,tweet_embedded`.
pub fn write_prompts_csv(path: &Path, prompts: &[RenderedPrompt]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ID", "tweet_embedded"])?;
    for p in prompts {
        w.write_record([p.record_id.as_str(), p.text.as_str()])?;
    }
    w.flush().map_err(io_err(path))
}
