//! Label extraction from raw backend responses.
//!
//! Single-word mode expects the whole response to be one vocabulary word,
//! give or take quotes and punctuation. Chain-of-thought mode takes the last
//! vocabulary word anywhere in the text. Anything unmatched becomes `NONE`
//! with a [`ParseStatus::FallbackNone`] status so it can be counted.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::label::StanceLabel;
use crate::prompts::{label_from_word, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseMode {
    SingleWord,
    CotScan,
}

impl ParseMode {
    pub fn for_kind(kind: PromptKind) -> Self {
        match kind {
            PromptKind::ZeroShot | PromptKind::FewShot => ParseMode::SingleWord,
            PromptKind::Cot => ParseMode::CotScan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseStatus {
    Ok,
    FallbackNone,
}

impl ParseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseStatus::Ok => "OK",
            ParseStatus::FallbackNone => "FALLBACK_NONE",
        }
    }
}

impl fmt::Display for ParseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParseStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(ParseStatus::Ok),
            "FALLBACK_NONE" => Ok(ParseStatus::FallbackNone),
            other => Err(format!("unknown parse status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extraction {
    pub label: StanceLabel,
    pub status: ParseStatus,
}

impl Extraction {
    fn ok(label: StanceLabel) -> Self {
        Extraction {
            label,
            status: ParseStatus::Ok,
        }
    }

    fn fallback() -> Self {
        Extraction {
            label: StanceLabel::None,
            status: ParseStatus::FallbackNone,
        }
    }
}

/// Parser switches. `lenient` also accepts space-separated variants such as
/// "in favor" and "neutral or unclear".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub lenient: bool,
}

static STRICT_VOCAB: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i-u)against|in-favor|neutral-or-unclear").unwrap());
static LENIENT_VOCAB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i-u)against|in[\s-]+favou?r|neutral[\s-]+or[\s-]+unclear").unwrap()
});
static SEPARATORS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\s-]+").unwrap());

const WRAPPERS: &[char] = &[
    '\'', '"', '`', '*', '(', ')', '[', ']', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}',
];
const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

pub fn extract_label(response: &str, mode: ParseMode) -> Extraction {
    extract_label_with(response, mode, ParseOptions::default())
}

pub fn extract_label_with(response: &str, mode: ParseMode, opts: ParseOptions) -> Extraction {
    let label = match mode {
        ParseMode::SingleWord => single_word(response, opts),
        ParseMode::CotScan => last_occurrence(response, opts),
    };
    label.map_or_else(Extraction::fallback, Extraction::ok)
}

fn single_word(response: &str, opts: ParseOptions) -> Option<StanceLabel> {
    let lower = response.trim().to_lowercase();
    let mut token = lower.as_str();
    loop {
        let next = token
            .trim()
            .trim_end_matches(TRAILING_PUNCT)
            .trim_matches(WRAPPERS);
        if next == token {
            break;
        }
        token = next;
    }
    label_from_word(token).or_else(|| {
        opts.lenient
            .then(|| normalize_lenient(token))
            .and_then(|t| label_from_word(&t))
    })
}

fn normalize_lenient(token: &str) -> String {
    SEPARATORS
        .replace_all(token, "-")
        .replace("favour", "favor")
}

fn last_occurrence(response: &str, opts: ParseOptions) -> Option<StanceLabel> {
    // vocabulary words cannot overlap each other, so the last non-overlapping
    // match is the last occurrence
    let re = if opts.lenient {
        &*LENIENT_VOCAB
    } else {
        &*STRICT_VOCAB
    };
    let m = re.find_iter(response).last()?;
    let word = m.as_str();
    if opts.lenient {
        label_from_word(&normalize_lenient(&word.to_lowercase()))
    } else {
        label_from_word(word)
    }
}
