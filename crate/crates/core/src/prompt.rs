//! History-aware review-generation prompts.
//!
//! A prompt has four parts: a task instruction, the user's numbered purchase
//! history (title, optional rating, review), the new item, and an empty
//! response header. Training and inference prompts are identical; training
//! examples additionally carry the reference review as the completion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{GenerationSample, HistoryItem};
use crate::io::{self, IoError};

pub const MIN_HISTORY_BUDGET: usize = 64;

const PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.";
const INSTRUCTION: &str = "Considering the user's preference and historical behaviors below, write a review this user would write for the new item, matching the user's writing style and the sentiment implied by the rating.";
pub const RESPONSE_HEADER: &str = "### Response:\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Training,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    pub include_ratings: bool,
    pub mode: PromptMode,
    /// Cap on the approximate token count of the rendered history block.
    pub history_token_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub dataset_tag: String,
    pub target_rating: u8,
    pub include_ratings: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub id: String,
    pub prompt: String,
    pub completion: String,
    pub meta: PromptMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("history budget {0} is below the minimum of {MIN_HISTORY_BUDGET}")]
    InvalidBudget(usize),
    #[error("sample {sample_id}: newest history item needs ~{needed} tokens, budget is {budget}")]
    BudgetTooSmall {
        sample_id: String,
        needed: usize,
        budget: usize,
    },
    #[error("sample {0} has no history")]
    EmptyHistory(String),
    #[error("example {0} has no completion; only training examples can be exported for SFT")]
    NotTraining(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Numbered history entries, one per item, in the order given.
pub fn render_history_block(items: &[HistoryItem], include_ratings: bool) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("{}. Item title: {}\n", i + 1, item.title));
        if include_ratings {
            out.push_str(&format!("   Rating: {} out of 5\n", item.rating));
        }
        out.push_str(&format!("   Review: {}", item.review_text));
    }
    out
}

/// ceil(1.3 × whitespace-delimited words).
pub fn approx_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words * 13).div_ceil(10)
}

/// Drops the oldest history items until the rendered history fits `budget`.
pub fn truncate_history(
    sample: &GenerationSample,
    budget: usize,
    include_ratings: bool,
) -> Result<GenerationSample, PromptError> {
    if budget < MIN_HISTORY_BUDGET {
        return Err(PromptError::InvalidBudget(budget));
    }
    if sample.history.is_empty() {
        return Err(PromptError::EmptyHistory(sample.sample_id()));
    }
    let mut start = 0;
    loop {
        let kept = &sample.history[start..];
        let needed = approx_tokens(&render_history_block(kept, include_ratings));
        if needed <= budget {
            let mut out = sample.clone();
            out.history = kept.to_vec();
            return Ok(out);
        }
        if kept.len() == 1 {
            return Err(PromptError::BudgetTooSmall {
                sample_id: sample.sample_id(),
                needed,
                budget,
            });
        }
        start += 1;
    }
}

fn render_prompt(sample: &GenerationSample, include_ratings: bool) -> String {
    let mut p = String::with_capacity(1024);
    p.push_str(PREAMBLE);
    p.push_str("\n\n### Instruction:\n");
    p.push_str(INSTRUCTION);
    p.push_str("\n\n### Input:\nThe user has purchased the following items:\n");
    p.push_str(&render_history_block(&sample.history, include_ratings));
    p.push_str("\nThe user purchased a new item:\nItem title: ");
    p.push_str(&sample.target_title);
    p.push('\n');
    if include_ratings {
        p.push_str(&format!("Rating: {} out of 5\n", sample.target_rating));
    }
    p.push('\n');
    p.push_str(RESPONSE_HEADER);
    p
}

pub fn build_prompt(
    sample: &GenerationSample,
    opts: &PromptOptions,
) -> Result<PromptExample, PromptError> {
    let truncated = truncate_history(sample, opts.history_token_budget, opts.include_ratings)?;
    let prompt = render_prompt(&truncated, opts.include_ratings);
    let completion = match opts.mode {
        PromptMode::Training => sample.reference_review.clone(),
        PromptMode::Inference => String::new(),
    };
    Ok(PromptExample {
        id: sample.sample_id(),
        prompt,
        completion,
        meta: PromptMeta {
            dataset_tag: sample.dataset_tag.clone(),
            target_rating: sample.target_rating,
            include_ratings: opts.include_ratings,
        },
    })
}

/// Writes prompt examples (either mode) as JSON lines.
pub fn write_prompts_jsonl(examples: &[PromptExample], path: &Path) -> Result<usize, PromptError> {
    Ok(io::write_jsonl(path, examples)?)
}

/// Writes training examples as an SFT file; rejects inference examples.
pub fn export_sft_jsonl(examples: &[PromptExample], path: &Path) -> Result<usize, PromptError> {
    if let Some(e) = examples.iter().find(|e| e.completion.is_empty()) {
        return Err(PromptError::NotTraining(e.id.clone()));
    }
    write_prompts_jsonl(examples, path)
}
