//! Per-user histories and the three evaluation splits.
//!
//! Each user's interactions are sorted by `(timestamp, item_id)`, users with
//! 11 to 29 interactions are kept, and the temporally last interaction becomes
//! the prediction target. Candidates are then shuffled with the portable
//! generator from [`crate::rng`] and cut into train / simple / hard sets.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::CorpusRecord;
use crate::io::{self, IoError};
use crate::rng;

/// Users must have strictly more than this many interactions.
pub const MIN_INTERACTIONS_EXCLUSIVE: usize = 10;
/// Users must have strictly fewer than this many interactions.
pub const MAX_INTERACTIONS_EXCLUSIVE: usize = 30;

pub const DEFAULT_TRAIN_SIZE: usize = 1000;
pub const DEFAULT_SIMPLE_SIZE: usize = 200;
pub const DEFAULT_HARD_SIZE: usize = 200;
pub const DEFAULT_NEG_MAX_RATING: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub item_id: String,
    pub title: String,
    pub review_text: String,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub items: Vec<HistoryItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub user_id: String,
    pub dataset_tag: String,
    pub history: Vec<HistoryItem>,
    pub target_item_id: String,
    pub target_title: String,
    pub target_rating: u8,
    pub target_timestamp: i64,
    pub reference_review: String,
}

impl GenerationSample {
    /// Identifier shared by prompts, generations and pairs.
    pub fn sample_id(&self) -> String {
        sample_id(&self.user_id, &self.target_item_id)
    }
}

pub fn sample_id(user_id: &str, item_id: &str) -> String {
    format!("{user_id}::{item_id}")
}

pub fn build_user_histories(records: impl IntoIterator<Item = CorpusRecord>) -> Vec<UserHistory> {
    let mut by_user: BTreeMap<String, Vec<HistoryItem>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id).or_default().push(HistoryItem {
            item_id: r.item_id,
            title: r.title,
            review_text: r.review_text,
            rating: r.rating,
            timestamp: r.timestamp,
        });
    }
    by_user
        .into_iter()
        .map(|(user_id, mut items)| {
            items.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.item_id.cmp(&b.item_id))
            });
            UserHistory { user_id, items }
        })
        .collect()
}

pub fn keeps_interaction_count(n: usize) -> bool {
    n > MIN_INTERACTIONS_EXCLUSIVE && n < MAX_INTERACTIONS_EXCLUSIVE
}

pub fn filter_by_interaction_count(histories: Vec<UserHistory>) -> Vec<UserHistory> {
    histories
        .into_iter()
        .filter(|h| keeps_interaction_count(h.items.len()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LeaveOutError {
    #[error("history has fewer than two interactions")]
    TooFewItems,
    #[error("last review is empty")]
    EmptyReference,
}

pub fn leave_last_out(
    history: &UserHistory,
    dataset_tag: &str,
) -> Result<GenerationSample, LeaveOutError> {
    let (target, rest) = match history.items.split_last() {
        Some((target, rest)) if !rest.is_empty() => (target, rest),
        _ => return Err(LeaveOutError::TooFewItems),
    };
    if target.review_text.trim().is_empty() {
        return Err(LeaveOutError::EmptyReference);
    }
    Ok(GenerationSample {
        user_id: history.user_id.clone(),
        dataset_tag: dataset_tag.to_string(),
        history: rest.to_vec(),
        target_item_id: target.item_id.clone(),
        target_title: target.title.clone(),
        target_rating: target.rating,
        target_timestamp: target.timestamp,
        reference_review: target.review_text.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub simple_eval: usize,
    pub hard_eval: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: DEFAULT_TRAIN_SIZE,
            simple_eval: DEFAULT_SIMPLE_SIZE,
            hard_eval: DEFAULT_HARD_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub simple_eval: usize,
    pub hard_eval: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub split: String,
    pub requested: usize,
    pub available: usize,
}

/// Everything needed to audit or reproduce one split build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_tag: String,
    pub seed: u64,
    pub neg_max_rating: u8,
    pub input_sha256: Option<String>,
    pub prng: String,
    pub users_total: usize,
    pub users_outside_interaction_range: usize,
    pub users_empty_reference: usize,
    pub candidates: usize,
    pub hard_eligible: usize,
    pub requested: SplitCounts,
    pub counts: SplitCounts,
    pub shortfalls: Vec<Shortfall>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<GenerationSample>,
    pub simple_eval: Vec<GenerationSample>,
    pub hard_eval: Vec<GenerationSample>,
    pub seed: u64,
    pub manifest: Manifest,
}

/// Shuffles the candidates and cuts train, simple and hard splits.
///
/// Candidates are first put in `(user_id, target_item_id)` order so the result
/// depends only on their content, not on how they were collected. Shortfalls
/// are recorded in the manifest; nothing is padded.
pub fn sample_splits(
    candidates: Vec<GenerationSample>,
    dataset_tag: &str,
    seed: u64,
    sizes: SplitSizes,
    neg_max_rating: u8,
) -> SplitSet {
    let mut pool = candidates;
    pool.sort_by(|a, b| {
        (a.user_id.as_str(), a.target_item_id.as_str())
            .cmp(&(b.user_id.as_str(), b.target_item_id.as_str()))
    });
    pool.dedup_by(|a, b| a.user_id == b.user_id && a.target_item_id == b.target_item_id);
    let candidate_count = pool.len();
    rng::shuffle(&mut pool, seed);

    let mut rest = pool.into_iter();
    let train: Vec<_> = rest.by_ref().take(sizes.train).collect();
    let simple_eval: Vec<_> = rest.by_ref().take(sizes.simple_eval).collect();
    let eligible: Vec<_> = rest.filter(|s| s.target_rating <= neg_max_rating).collect();
    let hard_eligible = eligible.len();
    let hard_eval: Vec<_> = eligible.into_iter().take(sizes.hard_eval).collect();

    let mut shortfalls = Vec::new();
    for (split, requested, available) in [
        ("train", sizes.train, train.len()),
        ("simple_eval", sizes.simple_eval, simple_eval.len()),
        ("hard_eval", sizes.hard_eval, hard_eval.len()),
    ] {
        if available < requested {
            shortfalls.push(Shortfall {
                split: split.to_string(),
                requested,
                available,
            });
        }
    }

    let manifest = Manifest {
        dataset_tag: dataset_tag.to_string(),
        seed,
        neg_max_rating,
        input_sha256: None,
        prng: "splitmix64+fisher-yates".to_string(),
        users_total: 0,
        users_outside_interaction_range: 0,
        users_empty_reference: 0,
        candidates: candidate_count,
        hard_eligible,
        requested: SplitCounts {
            train: sizes.train,
            simple_eval: sizes.simple_eval,
            hard_eval: sizes.hard_eval,
        },
        counts: SplitCounts {
            train: train.len(),
            simple_eval: simple_eval.len(),
            hard_eval: hard_eval.len(),
        },
        shortfalls,
    };
    SplitSet {
        train,
        simple_eval,
        hard_eval,
        seed,
        manifest,
    }
}

/// Runs the whole build from corpus records: histories, filter, leave-last-out,
/// split sampling. User-level drop counts land in the manifest.
pub fn build_splits(
    records: impl IntoIterator<Item = CorpusRecord>,
    dataset_tag: &str,
    seed: u64,
    sizes: SplitSizes,
    neg_max_rating: u8,
) -> SplitSet {
    let histories = build_user_histories(records);
    let users_total = histories.len();
    let kept = filter_by_interaction_count(histories);
    let users_outside_interaction_range = users_total - kept.len();
    let mut empty_reference = 0;
    let mut candidates = Vec::with_capacity(kept.len());
    for h in &kept {
        match leave_last_out(h, dataset_tag) {
            Ok(s) => candidates.push(s),
            Err(_) => empty_reference += 1,
        }
    }
    let mut set = sample_splits(candidates, dataset_tag, seed, sizes, neg_max_rating);
    set.manifest.users_total = users_total;
    set.manifest.users_outside_interaction_range = users_outside_interaction_range;
    set.manifest.users_empty_reference = empty_reference;
    set
}

pub const TRAIN_FILE: &str = "train.jsonl";
pub const SIMPLE_FILE: &str = "simple_eval.jsonl";
pub const HARD_FILE: &str = "hard_eval.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

impl SplitSet {
    pub fn write_to(&self, dir: &Path) -> Result<(), IoError> {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        io::write_jsonl(&dir.join(TRAIN_FILE), &self.train)?;
        io::write_jsonl(&dir.join(SIMPLE_FILE), &self.simple_eval)?;
        io::write_jsonl(&dir.join(HARD_FILE), &self.hard_eval)?;
        let mut manifest =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        io::write_text(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Disjointness and hard-set purity; returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (name, split) in [
            ("train", &self.train),
            ("simple_eval", &self.simple_eval),
            ("hard_eval", &self.hard_eval),
        ] {
            for s in split {
                if !seen.insert((s.user_id.as_str(), s.target_item_id.as_str())) {
                    return Err(format!(
                        "{} appears twice (second in {name})",
                        s.sample_id()
                    ));
                }
                if s.history.iter().any(|h| h.timestamp > s.target_timestamp) {
                    return Err(format!("{}: history item after target", s.sample_id()));
                }
            }
        }
        if let Some(s) = self
            .hard_eval
            .iter()
            .find(|s| s.target_rating > self.manifest.neg_max_rating)
        {
            return Err(format!(
                "{} in hard_eval has rating {}",
                s.sample_id(),
                s.target_rating
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, item: &str, ts: i64, rating: u8, text: &str) -> CorpusRecord {
        CorpusRecord {
            user_id: user.into(),
            item_id: item.into(),
            rating,
            review_text: text.into(),
            summary: String::new(),
            timestamp: ts,
            title: format!("Title {item}"),
        }
    }

    fn history(n: usize, last_rating: u8) -> UserHistory {
        let items = (0..n)
            .map(|i| HistoryItem {
                item_id: format!("I{i:02}"),
                title: format!("T{i}"),
                review_text: format!("review {i}"),
                rating: if i + 1 == n { last_rating } else { 4 },
                timestamp: i as i64,
            })
            .collect();
        UserHistory {
            user_id: "U".into(),
            items,
        }
    }

    #[test]
    fn histories_sorted_by_time_then_item() {
        let hs = build_user_histories(vec![
            rec("A", "X", 30, 5, "c"),
            rec("A", "Y", 10, 5, "a"),
            rec("A", "Z", 20, 5, "b"),
            rec("B", "B2", 7, 3, "q"),
            rec("B", "B1", 7, 3, "p"),
        ]);
        assert_eq!(hs.len(), 2);
        let ts: Vec<_> = hs[0].items.iter().map(|i| i.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        let ids: Vec<_> = hs[1].items.iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(ids, vec!["B1", "B2"]);
        assert!(build_user_histories(Vec::new()).is_empty());
    }

    #[test]
    fn interaction_bounds_are_strict() {
        assert!(!keeps_interaction_count(10));
        assert!(keeps_interaction_count(11));
        assert!(keeps_interaction_count(29));
        assert!(!keeps_interaction_count(30));
        let all_small = vec![history(5, 4), history(5, 4)];
        assert!(filter_by_interaction_count(all_small).is_empty());
    }

    #[test]
    fn leave_last_out_holds_out_the_latest() {
        let s = leave_last_out(&history(12, 1), "Arts").unwrap();
        assert_eq!(s.history.len(), 11);
        assert_eq!(s.target_item_id, "I11");
        assert_eq!(s.reference_review, "review 11");
        assert_eq!(s.target_rating, 1);
        assert_eq!(s.dataset_tag, "Arts");

        let s = leave_last_out(&history(2, 5), "Arts").unwrap();
        assert_eq!(s.history.len(), 1);

        let mut h = history(12, 4);
        h.items.last_mut().unwrap().review_text = "  ".into();
        assert_eq!(
            leave_last_out(&h, "Arts"),
            Err(LeaveOutError::EmptyReference)
        );
        assert_eq!(
            leave_last_out(&history(1, 4), "Arts"),
            Err(LeaveOutError::TooFewItems)
        );
    }

    fn candidates(n: usize, negative_every: usize) -> Vec<GenerationSample> {
        (0..n)
            .map(|i| GenerationSample {
                user_id: format!("U{i:05}"),
                dataset_tag: "Arts".into(),
                history: vec![],
                target_item_id: format!("I{i}"),
                target_title: "t".into(),
                target_rating: if i % negative_every == 0 { 1 } else { 5 },
                target_timestamp: 0,
                reference_review: "r".into(),
            })
            .collect()
    }

    #[test]
    fn splits_have_requested_sizes_and_are_disjoint() {
        let set = sample_splits(candidates(1500, 3), "Arts", 7, SplitSizes::default(), 2);
        assert_eq!(set.train.len(), 1000);
        assert_eq!(set.simple_eval.len(), 200);
        assert_eq!(set.hard_eval.len(), set.manifest.hard_eligible.min(200));
        assert!(set.manifest.hard_eligible > 0);
        set.check_invariants().unwrap();
    }

    #[test]
    fn shortfall_is_recorded_not_padded() {
        let set = sample_splits(
            candidates(300, 1_000_000),
            "Arts",
            1,
            SplitSizes::default(),
            2,
        );
        // Only U00000 is negative; it may land anywhere.
        assert!(set.hard_eval.len() <= 1);
        assert_eq!(set.train.len(), 300);
        assert!(set.simple_eval.is_empty());
        let names: Vec<_> = set
            .manifest
            .shortfalls
            .iter()
            .map(|s| s.split.as_str())
            .collect();
        assert_eq!(names, vec!["train", "simple_eval", "hard_eval"]);
    }

    #[test]
    fn input_order_does_not_matter() {
        let a = candidates(50, 4);
        let mut b = a.clone();
        b.reverse();
        let sizes = SplitSizes {
            train: 20,
            simple_eval: 10,
            hard_eval: 10,
        };
        assert_eq!(
            sample_splits(a, "x", 3, sizes, 2),
            sample_splits(b, "x", 3, sizes, 2)
        );
    }
}
