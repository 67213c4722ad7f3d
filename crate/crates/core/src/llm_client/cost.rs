use serde::Serialize;

use crate::prompts::{PromptKind, RenderedPrompt};

/// Counts the tokens a provider would bill for a piece of text.
pub trait TokenCounter {
    fn count(&self, text: &str) -> u64;
}

/// Roughly four bytes of English text per sub-word token.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicCounter;

impl TokenCounter for HeuristicCounter {
    fn count(&self, text: &str) -> u64 {
        (text.len() as u64).div_ceil(4)
    }
}

/// Expected completion length per record, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionAllowance {
    pub single_word: u64,
    pub cot: u64,
}

impl Default for CompletionAllowance {
    fn default() -> Self {
        CompletionAllowance {
            single_word: 5,
            cot: 256,
        }
    }
}

impl CompletionAllowance {
    pub fn for_kind(&self, kind: PromptKind) -> u64 {
        match kind {
            PromptKind::ZeroShot | PromptKind::FewShot => self.single_word,
            PromptKind::Cot => self.cot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub token_count: u64,
    pub usd_per_1k_tokens: f64,
    pub total_usd: f64,
}

/// Prompt tokens plus a fixed completion allowance per prompt, priced per
/// thousand tokens.
pub fn estimate_cost(
    prompts: &[RenderedPrompt],
    counter: &dyn TokenCounter,
    usd_per_1k_tokens: f64,
    allowance: &CompletionAllowance,
) -> CostEstimate {
    let token_count = prompts
        .iter()
        .map(|p| counter.count(&p.text) + allowance.for_kind(p.kind))
        .sum::<u64>();
    CostEstimate {
        token_count,
        usd_per_1k_tokens,
        total_usd: token_count as f64 / 1000.0 * usd_per_1k_tokens,
    }
}
