//! Cross-run comparison table and confusion-matrix figures.
//!
//! A run directory is `<workdir>/<model_type>/<prompt_type>/` holding a
//! `metrics.csv` and, optionally, a `confusion_matrix.csv`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::label::{Partition, StanceLabel};
use crate::metrics::{self, normalize, Axis, ConfusionMatrix, MetricsError};

pub const SUMMARY_HEADER: [&str; 7] = [
    "model_type",
    "prompt_type",
    "partition",
    "f1_macro",
    "f1_NONE",
    "f1_FAVOR",
    "f1_AGAINST",
];

/// Workdir entries that are never run directories.
const RESERVED_DIRS: [&str; 2] = ["processed", "summary"];

#[derive(Debug, thiserror::Error)]
pub enum SummaryError {
    #[error("run {run}: {source}")]
    Run {
        run: String,
        #[source]
        source: MetricsError,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunRef {
    pub model_type: String,
    pub prompt_type: String,
    pub dir: PathBuf,
}

impl RunRef {
    pub fn name(&self) -> String {
        format!("{}/{}", self.model_type, self.prompt_type)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model_type: String,
    pub prompt_type: String,
    pub partition: Partition,
    pub f1_macro: f64,
    pub f1_none: f64,
    pub f1_favor: f64,
    pub f1_against: f64,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SummaryError + '_ {
    move |source| SummaryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>, SummaryError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_dir() {
            out.push((
                entry.file_name().to_string_lossy().into_owned(),
                entry.path(),
            ));
        }
    }
    out.sort();
    Ok(out)
}

/// Every `<model_type>/<prompt_type>/` under `workdir` that holds a
/// `metrics.csv`, in name order.
pub fn discover_runs(workdir: &Path) -> Result<Vec<RunRef>, SummaryError> {
    let mut runs = Vec::new();
    for (model_type, model_dir) in sorted_subdirs(workdir)? {
        if RESERVED_DIRS.contains(&model_type.as_str()) {
            continue;
        }
        for (prompt_type, dir) in sorted_subdirs(&model_dir)? {
            if dir.join("metrics.csv").is_file() {
                runs.push(RunRef {
                    model_type: model_type.clone(),
                    prompt_type,
                    dir,
                });
            }
        }
    }
    Ok(runs)
}

/// Orders rows by macro-F1 descending, then by run name and partition so
/// ties are deterministic.
pub fn compare_rows(a: &SummaryRow, b: &SummaryRow) -> Ordering {
    b.f1_macro
        .total_cmp(&a.f1_macro)
        .then_with(|| a.model_type.cmp(&b.model_type))
        .then_with(|| a.prompt_type.cmp(&b.prompt_type))
        .then_with(|| a.partition.cmp(&b.partition))
}

pub fn summarize_runs(
    runs: &[RunRef],
    only: Option<Partition>,
) -> Result<Vec<SummaryRow>, SummaryError> {
    let mut rows = Vec::new();
    for run in runs {
        let reports =
            metrics::read_metrics_csv(&run.dir.join("metrics.csv")).map_err(|source| {
                SummaryError::Run {
                    run: run.name(),
                    source,
                }
            })?;
        for r in reports {
            if only.is_some_and(|p| p != r.partition) {
                continue;
            }
            rows.push(SummaryRow {
                model_type: run.model_type.clone(),
                prompt_type: run.prompt_type.clone(),
                partition: r.partition,
                f1_macro: r.scores.f1_macro,
                f1_none: r.scores.class(StanceLabel::None).f1,
                f1_favor: r.scores.class(StanceLabel::Favor).f1,
                f1_against: r.scores.class(StanceLabel::Against).f1,
            });
        }
    }
    rows.sort_by(compare_rows);
    Ok(rows)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), SummaryError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.model_type.clone(),
            r.prompt_type.clone(),
            r.partition.as_str().to_string(),
            r.f1_macro.to_string(),
            r.f1_none.to_string(),
            r.f1_favor.to_string(),
            r.f1_against.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

const CELL: usize = 56;
const MARGIN: usize = 90;
const PANEL_GAP: usize = 40;
const TITLE_H: usize = 40;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn draw_panel(
    svg: &mut String,
    x0: usize,
    y0: usize,
    caption: &str,
    values: [[f64; 3]; 3],
    scale: f64,
    percent: bool,
) {
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        x0 + 3 * CELL / 2,
        y0 - 24,
        escape(caption)
    );
    for (j, label) in StanceLabel::ALL.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{label}</text>"#,
            x0 + j * CELL + CELL / 2,
            y0 - 6
        );
    }
    for (i, label) in StanceLabel::ALL.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{label}</text>"#,
            x0 - 6,
            y0 + i * CELL + CELL / 2 + 4
        );
        for (j, &v) in values[i].iter().enumerate() {
            let t = if scale > 0.0 {
                (v / scale).clamp(0.0, 1.0)
            } else {
                0.0
            };
            // white to dark blue
            let shade = |lo: f64, hi: f64| (lo + (hi - lo) * t).round() as u8;
            let fill = format!(
                "#{:02x}{:02x}{:02x}",
                shade(247.0, 8.0),
                shade(251.0, 48.0),
                shade(255.0, 107.0)
            );
            let ink = if t > 0.5 { "#ffffff" } else { "#000000" };
            let text = if percent {
                format!("{v:.1}")
            } else {
                format!("{v}")
            };
            let (x, y) = (x0 + j * CELL, y0 + i * CELL);
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#999999"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" fill="{ink}">{text}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
}

/// SVG grid with one line per partition and three panels per line: counts,
/// row-normalized and column-normalized percentages. Rows are gold labels.
pub fn render_confusion_svg(title: &str, matrices: &[(Partition, ConfusionMatrix)]) -> String {
    let panel_w = 3 * CELL;
    let width = MARGIN + 3 * panel_w + 2 * PANEL_GAP + 20;
    let line_h = 3 * CELL + 60;
    let height = TITLE_H + matrices.len() * line_h + 20;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        width / 2,
        escape(title)
    );
    for (k, (partition, m)) in matrices.iter().enumerate() {
        let y0 = TITLE_H + k * line_h + 40;
        let raw = m.counts().map(|row| row.map(|c| c as f64));
        let max = raw.iter().flatten().copied().fold(0.0, f64::max);
        let panels = [
            ("counts", raw, max, false),
            ("row-normalized %", normalize(m, Axis::Row), 100.0, true),
            (
                "column-normalized %",
                normalize(m, Axis::Column),
                100.0,
                true,
            ),
        ];
        for (p, (name, values, scale, percent)) in panels.into_iter().enumerate() {
            let x0 = MARGIN + p * (panel_w + PANEL_GAP);
            draw_panel(
                &mut svg,
                x0,
                y0,
                &format!("{partition}: {name}"),
                values,
                scale,
                percent,
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `confusion_matrices.svg` into the run directory when the run has a
/// confusion file. Returns the figure path if one was written.
pub fn write_run_figure(run: &RunRef) -> Result<Option<PathBuf>, SummaryError> {
    let source = run.dir.join("confusion_matrix.csv");
    if !source.is_file() {
        log::warn!(
            "run {} has no confusion_matrix.csv; skipping figure",
            run.name()
        );
        return Ok(None);
    }
    let matrices = metrics::read_confusion_csv(&source).map_err(|source| SummaryError::Run {
        run: run.name(),
        source,
    })?;
    let path = run.dir.join("confusion_matrices.svg");
    fs::write(&path, render_confusion_svg(&run.name(), &matrices)).map_err(io_err(&path))?;
    Ok(Some(path))
}
