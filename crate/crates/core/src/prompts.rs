//! Prompt rendering for the three template families.
//!
//! Templates are stored as files under `templates/` and embedded at compile
//! time so their exact bytes (including typos and a curly apostrophe in the
//! chain-of-thought template) stay diffable. Placeholders are `{target}`,
//! `{tweet}` and `{examples}`; substitution is a single left-to-right pass, so
//! braces inside substituted text are never re-expanded.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Record;
use crate::label::{Partition, StanceLabel};

const ZERO_SHOT_TEMPLATE: &str = include_str!("../templates/zero_shot.txt");
const FEW_SHOT_TEMPLATE: &str = include_str!("../templates/few_shot.txt");
const FEW_SHOT_EXAMPLE_TEMPLATE: &str = include_str!("../templates/few_shot_example.txt");
const COT_TEMPLATE: &str = include_str!("../templates/cot.txt");

/// Number of in-context examples, one per class.
pub const FEW_SHOT_EXAMPLE_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("few-shot prompting needs exactly {FEW_SHOT_EXAMPLE_COUNT} examples, got {0}")]
    ExampleCount(usize),
    #[error("few-shot examples must cover every label once; {0} is missing")]
    ExampleMissingLabel(StanceLabel),
    #[error("unknown prompt kind {0:?} (expected zero_shot, few_shot or CoT)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptKind {
    ZeroShot,
    FewShot,
    Cot,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [PromptKind::ZeroShot, PromptKind::FewShot, PromptKind::Cot];

    /// Directory and report name of the kind.
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::ZeroShot => "zero_shot",
            PromptKind::FewShot => "few_shot",
            PromptKind::Cot => "CoT",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zeroshot" => Ok(PromptKind::ZeroShot),
            "few_shot" | "fewshot" => Ok(PromptKind::FewShot),
            "cot" | "chain_of_thought" => Ok(PromptKind::Cot),
            _ => Err(PromptError::UnknownKind(s.to_string())),
        }
    }
}

impl Serialize for PromptKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PromptKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Vocabulary word the prompts ask the model to answer with.
pub fn prompt_word(label: StanceLabel) -> &'static str {
    match label {
        StanceLabel::Against => "against",
        StanceLabel::Favor => "in-favor",
        StanceLabel::None => "neutral-or-unclear",
    }
}

/// Inverse of [`prompt_word`], case-insensitive after trimming.
pub fn label_from_word(word: &str) -> Option<StanceLabel> {
    let word = word.trim();
    StanceLabel::ALL
        .into_iter()
        .find(|&l| prompt_word(l).eq_ignore_ascii_case(word))
}

/// One labelled in-context example. `answer` is written as a vocabulary word
/// in config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub tweet: String,
    #[serde(with = "vocab_word")]
    pub answer: StanceLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

mod vocab_word {
    use super::*;

    pub fn serialize<S: Serializer>(label: &StanceLabel, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(prompt_word(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<StanceLabel, D::Error> {
        let s = String::deserialize(d)?;
        label_from_word(&s).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "unknown answer word {s:?} (expected in-favor, against or neutral-or-unclear)"
            ))
        })
    }
}

impl FewShotExample {
    pub fn new(tweet: impl Into<String>, answer: StanceLabel) -> Self {
        FewShotExample {
            tweet: tweet.into(),
            answer,
            source_id: None,
        }
    }
}

/// The three hand-picked training tweets used for the Abortion topic.
pub fn default_examples() -> Vec<FewShotExample> {
    vec![
        FewShotExample::new(
            "it's a free country. freedom includes freedom of choice.",
            StanceLabel::Favor,
        ),
        FewShotExample::new(
            "i really don't understand how some people are pro-choice. a life is a life no matter if it's 2 weeks old or 20 years old.",
            StanceLabel::Against,
        ),
        FewShotExample::new("so ready for my abortion debate", StanceLabel::None),
    ]
}

/// True when `examples` is the built-in set (ignoring provenance IDs).
pub fn is_default_example_set(examples: &[FewShotExample]) -> bool {
    let defaults = default_examples();
    examples.len() == defaults.len()
        && examples
            .iter()
            .zip(&defaults)
            .all(|(a, b)| a.tweet == b.tweet && a.answer == b.answer)
}

pub fn validate_examples(examples: &[FewShotExample]) -> Result<(), PromptError> {
    if examples.len() != FEW_SHOT_EXAMPLE_COUNT {
        return Err(PromptError::ExampleCount(examples.len()));
    }
    for label in StanceLabel::ALL {
        if !examples.iter().any(|e| e.answer == label) {
            return Err(PromptError::ExampleMissingLabel(label));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedPrompt {
    pub record_id: String,
    pub kind: PromptKind,
    pub text: String,
}

/// Replaces `{name}` placeholders in one pass. Unknown names are kept as is.
fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = vars.iter().find_map(|(name, value)| {
            tail[1..]
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('}'))
                .map(|_| (name.len() + 2, *value))
        });
        match hit {
            Some((len, value)) => {
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn render_examples(examples: &[FewShotExample]) -> String {
    examples
        .iter()
        .map(|e| {
            substitute(
                FEW_SHOT_EXAMPLE_TEMPLATE,
                &[("tweet", &e.tweet), ("answer", prompt_word(e.answer))],
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the prompt text for one tweet.
pub fn render_prompt_text(
    kind: PromptKind,
    tweet: &str,
    target_display: &str,
    examples: &[FewShotExample],
) -> Result<String, PromptError> {
    Ok(match kind {
        PromptKind::ZeroShot => substitute(
            ZERO_SHOT_TEMPLATE,
            &[("target", target_display), ("tweet", tweet)],
        ),
        PromptKind::FewShot => {
            validate_examples(examples)?;
            let block = render_examples(examples);
            substitute(
                FEW_SHOT_TEMPLATE,
                &[
                    ("target", target_display),
                    ("tweet", tweet),
                    ("examples", &block),
                ],
            )
        }
        PromptKind::Cot => substitute(
            COT_TEMPLATE,
            &[("target", target_display), ("tweet", tweet)],
        ),
    })
}

/// Renders the prompt for a cleaned record. `examples` is ignored unless
/// `kind` is few-shot.
pub fn build_prompt(
    kind: PromptKind,
    record: &Record,
    target_display: &str,
    examples: &[FewShotExample],
) -> Result<RenderedPrompt, PromptError> {
    Ok(RenderedPrompt {
        record_id: record.id.clone(),
        kind,
        text: render_prompt_text(kind, &record.tweet, target_display, examples)?,
    })
}

/// IDs of validation/test records whose tweet equals an in-context example.
pub fn leakage_exclusion_ids<'a>(
    examples: &[FewShotExample],
    records: impl IntoIterator<Item = &'a Record>,
) -> BTreeSet<String> {
    let tweets: BTreeSet<&str> = examples.iter().map(|e| e.tweet.as_str()).collect();
    records
        .into_iter()
        .filter(|r| r.partition != Partition::Train && tweets.contains(r.tweet.as_str()))
        .map(|r| r.id.clone())
        .collect()
}
