use std::fs;
use std::path::{Path, PathBuf};

use super::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotateMode {
    /// Set an existing predictions file aside before prompting from scratch.
    Fresh,
    /// Put a previously set-aside predictions file back in place.
    Restore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RotateOutcome {
    Renamed { from: PathBuf, to: PathBuf },
    Nothing,
}

/// `predictions.csv` → `predictions_cached.csv`, next to the original.
pub fn cached_path(predictions: &Path) -> PathBuf {
    let stem = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match predictions.extension() {
        Some(ext) => format!("{stem}_cached.{}", ext.to_string_lossy()),
        None => format!("{stem}_cached"),
    };
    predictions.with_file_name(name)
}

/// Moves the predictions file to or from its cached name. Refuses when the
/// destination already exists so no result file is ever overwritten.
pub fn cache_rotate(predictions: &Path, mode: RotateMode) -> Result<RotateOutcome, ClientError> {
    let cached = cached_path(predictions);
    let (from, to) = match mode {
        RotateMode::Fresh => (predictions.to_path_buf(), cached),
        RotateMode::Restore => (cached, predictions.to_path_buf()),
    };
    if !from.exists() {
        return Ok(RotateOutcome::Nothing);
    }
    if to.exists() {
        return Err(ClientError::RotateCollision { from, to });
    }
    fs::rename(&from, &to).map_err(|source| ClientError::Io {
        path: from.clone(),
        source,
    })?;
    log::info!("renamed {} to {}", from.display(), to.display());
    Ok(RotateOutcome::Renamed { from, to })
}
