//! Scoring runs, averaging repeats, and rendering reports.

pub mod pairs;
pub mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::GenerationSample;
use crate::generation::GeneratedReview;
use crate::metrics::{self, EmbedError, EmbeddingProvider};

pub use pairs::{build_humaneval_pairs, render_cases, EvalPair};
pub use report::{render_report, Provenance, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WithRating,
    WithoutRating,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::WithRating => "w/ rating",
            Variant::WithoutRating => "w/o rating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Simple,
    Hard,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Simple => "simple",
            Split::Hard => "hard",
        })
    }
}

/// Scores for one system × variant × split, on the percentage scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub system_name: String,
    pub variant: Variant,
    pub split: Split,
    pub rouge1: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bert_mean: f64,
    pub n_samples: usize,
    pub n_runs: usize,
    /// Samples whose embedding cosine hit a zero vector.
    #[serde(default)]
    pub bert_flagged: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl MetricsRow {
    fn config(&self) -> (&str, Variant, Split) {
        (&self.system_name, self.variant, self.split)
    }
}

/// Per-sample scores behind a [`MetricsRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub rouge1_f1: f64,
    #[serde(rename = "rougeL_f1")]
    pub rouge_l_f1: f64,
    pub embedding_cosine: f64,
    pub embedding_flagged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no reference for sample {0}")]
    MissingReference(String),
    #[error("sample id {0} appears more than once")]
    DuplicateSampleId(String),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("cannot average rows with different configurations: {0}")]
    MixedConfigs(String),
    #[error("{missing} of {requested} requested ids are available ({available} present)")]
    InsufficientSamples {
        requested: usize,
        available: usize,
        missing: usize,
    },
    #[error("system {system} has no generation for sample {sample_id}")]
    MissingGeneration { system: String, sample_id: String },
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

/// sample_id → reference review, rejecting duplicate ids.
pub fn reference_map(samples: &[GenerationSample]) -> Result<HashMap<String, String>, EvalError> {
    let mut map = HashMap::with_capacity(samples.len());
    for s in samples {
        let id = s.sample_id();
        if map.insert(id.clone(), s.reference_review.clone()).is_some() {
            return Err(EvalError::DuplicateSampleId(id));
        }
    }
    Ok(map)
}

pub struct EvalTarget<'a> {
    pub system_name: &'a str,
    pub variant: Variant,
    pub split: Split,
}

pub fn run_eval(
    generations: &[GeneratedReview],
    references: &HashMap<String, String>,
    provider: &dyn EmbeddingProvider,
    target: EvalTarget<'_>,
) -> Result<(MetricsRow, Vec<SampleScore>), EvalError> {
    if generations.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(generations.len());
    for g in generations {
        if !seen.insert(g.sample_id.as_str()) {
            return Err(EvalError::DuplicateSampleId(g.sample_id.clone()));
        }
        let reference = references
            .get(&g.sample_id)
            .ok_or_else(|| EvalError::MissingReference(g.sample_id.clone()))?;
        pairs.push((g.text.clone(), reference.clone()));
    }

    let sims = metrics::batch_similarity(&pairs, provider)?;
    let scores: Vec<SampleScore> = generations
        .iter()
        .zip(&pairs)
        .zip(&sims)
        .map(|((g, (cand, reference)), sim)| SampleScore {
            sample_id: g.sample_id.clone(),
            rouge1_f1: metrics::rouge_1(cand, reference).f1,
            rouge_l_f1: metrics::rouge_l(cand, reference).f1,
            embedding_cosine: sim.value,
            embedding_flagged: sim.zero_vector,
        })
        .collect();

    let column = |f: fn(&SampleScore) -> f64| -> Vec<f64> { scores.iter().map(f).collect() };
    let aggregate = |v: Vec<f64>| metrics::corpus_aggregate(&v).map_err(|_| EvalError::EmptyInput);
    let row = MetricsRow {
        system_name: target.system_name.to_string(),
        variant: target.variant,
        split: target.split,
        rouge1: aggregate(column(|s| s.rouge1_f1))?,
        rouge_l: aggregate(column(|s| s.rouge_l_f1))?,
        bert_mean: aggregate(column(|s| s.embedding_cosine))?,
        n_samples: scores.len(),
        n_runs: 1,
        bert_flagged: scores.iter().filter(|s| s.embedding_flagged).count(),
        provenance: BTreeMap::from([("embedding_provider".to_string(), provider.name())]),
    };
    Ok((row, scores))
}

/// Order-independent mean: values are summed in sorted order.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Element-wise mean of repeated runs of one configuration.
pub fn repeat_and_average(rows: &[MetricsRow]) -> Result<MetricsRow, EvalError> {
    let first = rows.first().ok_or(EvalError::EmptyInput)?;
    for r in rows {
        if r.config() != first.config() {
            return Err(EvalError::MixedConfigs(format!(
                "{}/{:?}/{} vs {}/{:?}/{}",
                first.system_name, first.variant, first.split, r.system_name, r.variant, r.split
            )));
        }
        if r.n_samples != first.n_samples {
            return Err(EvalError::MixedConfigs(format!(
                "n_samples {} vs {}",
                first.n_samples, r.n_samples
            )));
        }
    }
    let mean_of = |f: fn(&MetricsRow) -> f64| stable_mean(rows.iter().map(f).collect());

    let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in rows {
        for (k, v) in &r.provenance {
            let values = provenance.entry(k.clone()).or_default();
            if !values.contains(v) {
                values.push(v.clone());
            }
        }
    }
    Ok(MetricsRow {
        system_name: first.system_name.clone(),
        variant: first.variant,
        split: first.split,
        rouge1: mean_of(|r| r.rouge1),
        rouge_l: mean_of(|r| r.rouge_l),
        bert_mean: mean_of(|r| r.bert_mean),
        n_samples: first.n_samples,
        n_runs: rows.len(),
        bert_flagged: rows.iter().map(|r| r.bert_flagged).max().unwrap_or(0),
        provenance: provenance
            .into_iter()
            .map(|(k, mut v)| {
                v.sort();
                (k, v.join(", "))
            })
            .collect(),
    })
}

/// Groups rows by configuration and averages each group.
pub fn average_groups(rows: &[MetricsRow]) -> Result<Vec<MetricsRow>, EvalError> {
    let mut groups: BTreeMap<(String, Variant, Split), Vec<MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.system_name.clone(), r.variant, r.split))
            .or_default()
            .push(r.clone());
    }
    groups.values().map(|g| repeat_and_average(g)).collect()
}
