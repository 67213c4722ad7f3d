use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Three-way stance of a tweet towards its target.
///
/// The derived ordering is the canonical order used by every matrix and
/// report: `AGAINST`, `FAVOR`, `NONE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StanceLabel {
    Against,
    Favor,
    None,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Against, StanceLabel::Favor, StanceLabel::None];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Against => "AGAINST",
            StanceLabel::Favor => "FAVOR",
            StanceLabel::None => "NONE",
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stance label {0:?} (expected AGAINST, FAVOR or NONE)")]
pub struct UnknownLabel(pub String);

impl FromStr for StanceLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AGAINST" => Ok(StanceLabel::Against),
            "FAVOR" => Ok(StanceLabel::Favor),
            "NONE" => Ok(StanceLabel::None),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// Which split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Vali,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Vali, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Vali => "vali",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown partition {0:?} (expected train, vali or test)")]
pub struct UnknownPartition(pub String);

impl FromStr for Partition {
    type Err = UnknownPartition;

    /// Accepts the bare names and the `_raw` suffixed variants older result
    /// files use (`vali_raw`, `test_raw`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let base = s.trim().strip_suffix("_raw").unwrap_or(s.trim());
        match base.to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "vali" | "validation" => Ok(Partition::Vali),
            "test" => Ok(Partition::Test),
            _ => Err(UnknownPartition(s.to_string())),
        }
    }
}
