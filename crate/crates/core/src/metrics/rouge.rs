use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Score {
    /// Builds a score from a match count; empty sides give zero.
    pub fn from_matches(matches: usize, candidate_len: usize, reference_len: usize) -> Self {
        let ratio = |n: usize| {
            if n == 0 {
                0.0
            } else {
                matches as f64 / n as f64
            }
        };
        let precision = ratio(candidate_len);
        let recall = ratio(reference_len);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Score {
            precision,
            recall,
            f1,
        }
    }
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Clipped unigram overlap.
pub fn unigram_overlap<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> usize {
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *ref_counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut matches = 0;
    for t in candidate {
        if let Some(c) = ref_counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                matches += 1;
            }
        }
    }
    matches
}

/// Longest common subsequence length, O(n·m) time and O(m) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

pub fn rouge_1_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Score {
    Score::from_matches(
        unigram_overlap(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

pub fn rouge_l_tokens<T: AsRef<str> + PartialEq>(candidate: &[T], reference: &[T]) -> Score {
    Score::from_matches(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

pub fn rouge_1(candidate: &str, reference: &str) -> Score {
    rouge_1_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn rouge_l(candidate: &str, reference: &str) -> Score {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}
