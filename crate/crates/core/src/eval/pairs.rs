use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::GenerationSample;
use crate::io::sha256_hex;
use crate::rng;

/// One reference/generation pair for human judgment (`pairs.jsonl`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub pair_id: String,
    pub system: String,
    pub reference_text: String,
    pub generated_text: String,
}

/// Opaque id: it must not reveal the system to annotators.
fn pair_id(seed: u64, sample_id: &str, system: &str) -> String {
    let digest = sha256_hex(format!("{seed}\0{sample_id}\0{system}").as_bytes());
    format!("p-{}", &digest[..16])
}

/// Samples `n` ids from the split with the portable shuffle and emits one pair
/// per selected id and system. `generations` maps system → sample_id → text.
pub fn build_humaneval_pairs(
    split: &[GenerationSample],
    generations: &BTreeMap<String, HashMap<String, String>>,
    n: usize,
    seed: u64,
) -> Result<Vec<EvalPair>, EvalError> {
    let references = super::reference_map(split)?;
    let mut ids: Vec<&String> = references.keys().collect();
    if n > ids.len() {
        return Err(EvalError::InsufficientSamples {
            requested: n,
            available: ids.len(),
            missing: n - ids.len(),
        });
    }
    ids.sort();
    rng::shuffle(&mut ids, seed);

    let mut pairs = Vec::with_capacity(n * generations.len());
    for id in ids.into_iter().take(n) {
        for (system, gens) in generations {
            let generated = gens.get(id).ok_or_else(|| EvalError::MissingGeneration {
                system: system.clone(),
                sample_id: id.clone(),
            })?;
            pairs.push(EvalPair {
                pair_id: pair_id(seed, id, system),
                system: system.clone(),
                reference_text: references[id].clone(),
                generated_text: generated.clone(),
            });
        }
    }
    Ok(pairs)
}

/// Side-by-side case study: reference first, then each system, verbatim.
pub fn render_cases(
    sample_ids: &[String],
    generations: &BTreeMap<String, HashMap<String, String>>,
    references: &HashMap<String, String>,
) -> Result<String, EvalError> {
    let mut out = String::new();
    for id in sample_ids {
        let reference = references
            .get(id)
            .ok_or_else(|| EvalError::MissingReference(id.clone()))?;
        out.push_str(&format!("## {id}\n\n### Reference\n\n{reference}\n\n"));
        for (system, gens) in generations {
            let text = gens.get(id).ok_or_else(|| EvalError::MissingGeneration {
                system: system.clone(),
                sample_id: id.clone(),
            })?;
            out.push_str(&format!("### {system}\n\n{text}\n\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize) -> Vec<GenerationSample> {
        (0..n)
            .map(|i| GenerationSample {
                user_id: format!("U{i:03}"),
                dataset_tag: "Arts".into(),
                history: vec![],
                target_item_id: "I".into(),
                target_title: "t".into(),
                target_rating: 5,
                target_timestamp: 0,
                reference_review: format!("reference {i}"),
            })
            .collect()
    }

    fn gens(
        split: &[GenerationSample],
        systems: &[&str],
    ) -> BTreeMap<String, HashMap<String, String>> {
        systems
            .iter()
            .map(|s| {
                let m = split
                    .iter()
                    .map(|x| (x.sample_id(), format!("{s} says {}", x.user_id)))
                    .collect();
                (s.to_string(), m)
            })
            .collect()
    }

    #[test]
    fn counts_and_determinism() {
        let split = samples(200);
        let g = gens(&split, &["llama-zero-shot", "gpt-x", "reviewllm"]);
        let pairs = build_humaneval_pairs(&split, &g, 100, 11).unwrap();
        assert_eq!(pairs.len(), 300);
        assert_eq!(pairs, build_humaneval_pairs(&split, &g, 100, 11).unwrap());
        assert_ne!(pairs, build_humaneval_pairs(&split, &g, 100, 12).unwrap());
        let mut ids: Vec<_> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 300);
        assert!(pairs.iter().all(|p| !p.pair_id.contains(&p.system)));
    }

    #[test]
    fn insufficient_and_missing() {
        let split = samples(120);
        let g = gens(&split, &["a"]);
        assert!(matches!(
            build_humaneval_pairs(&split, &g, 150, 1),
            Err(EvalError::InsufficientSamples {
                requested: 150,
                available: 120,
                ..
            })
        ));
        let mut g = gens(&split, &["a", "b"]);
        g.get_mut("b").unwrap().clear();
        assert!(matches!(
            build_humaneval_pairs(&split, &g, 5, 1),
            Err(EvalError::MissingGeneration { .. })
        ));
    }

    #[test]
    fn cases_render_reference_then_systems() {
        let split = samples(2);
        let g = gens(&split, &["a", "b", "c"]);
        let refs = super::super::reference_map(&split).unwrap();
        let id = split[0].sample_id();
        let md = render_cases(std::slice::from_ref(&id), &g, &refs).unwrap();
        assert_eq!(md.matches("### ").count(), 4);
        assert!(md.find("### Reference").unwrap() < md.find("### a").unwrap());
        assert_eq!(render_cases(&[], &g, &refs).unwrap(), "");
        let mut g2 = g.clone();
        g2.get_mut("c").unwrap().remove(&id);
        assert!(render_cases(&[id], &g2, &refs).is_err());
        assert!(matches!(
            render_cases(&["nope".into()], &g, &refs),
            Err(EvalError::MissingReference(_))
        ));
    }
}
