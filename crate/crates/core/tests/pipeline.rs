//! Drives the `revgen` binary through a full run against a local stub endpoint.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use axum::http::StatusCode;
use common::{chat_body, start_stub, synthetic_corpus, v1};
use flate2::write::GzEncoder;
use revgen_core::dataset::GenerationSample;
use revgen_core::eval::MetricsRow;
use revgen_core::io::read_jsonl;
use revgen_core::prompt::PromptExample;
use serde_json::{json, Value};

fn revgen(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_revgen"))
        .args(args)
        .output()
        .unwrap();
    if !out.status.success() {
        eprintln!(
            "revgen {args:?} stderr:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

async fn revgen_async(args: Vec<String>) -> Output {
    tokio::task::spawn_blocking(move || {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        revgen(&refs)
    })
    .await
    .unwrap()
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Raw review and metadata dumps, gzipped, with a few defective lines mixed in.
fn write_raw(dir: &Path) -> (PathBuf, PathBuf) {
    let records = synthetic_corpus(120, 99);
    let reviews = dir.join("reviews.json.gz");
    let mut gz = GzEncoder::new(
        std::fs::File::create(&reviews).unwrap(),
        flate2::Compression::default(),
    );
    let mut titles = BTreeSet::new();
    for r in &records {
        let line = json!({
            "reviewerID": r.user_id,
            "asin": r.item_id,
            "overall": r.rating as f64,
            "reviewText": r.review_text,
            "summary": "fine",
            "unixReviewTime": r.timestamp,
        });
        writeln!(gz, "{line}").unwrap();
        titles.insert(r.item_id.clone());
    }
    writeln!(gz, "{{not json").unwrap();
    writeln!(
        gz,
        "{}",
        json!({"reviewerID": "X", "asin": "B00000", "overall": 7, "unixReviewTime": 1})
    )
    .unwrap();
    writeln!(
        gz,
        "{}",
        json!({"reviewerID": "X", "asin": "ZZZ-no-title", "overall": 4, "unixReviewTime": 1})
    )
    .unwrap();
    gz.finish().unwrap();

    let meta = dir.join("meta.json");
    let mut f = std::fs::File::create(&meta).unwrap();
    for item in &titles {
        writeln!(
            f,
            "{}",
            json!({"asin": item, "title": format!("  Item   {item} ")})
        )
        .unwrap();
    }
    writeln!(f, "{}", json!({"asin": "EMPTY", "title": "   "})).unwrap();
    (reviews, meta)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (reviews, meta) = write_raw(d);

    // ingest
    let corpus = d.join("corpus.jsonl");
    let out = revgen(&[
        "ingest",
        "--reviews",
        &p(&reviews),
        "--meta",
        &p(&meta),
        "--out",
        &p(&corpus),
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(report["reviews"]["skipped"]["malformed_line"], 1);
    assert_eq!(report["reviews"]["skipped"]["rating_out_of_range"], 1);
    assert_eq!(report["missing_title"], 1);
    assert_eq!(report["metadata"]["skipped"]["empty_title"], 1);
    let first: Value = serde_json::from_str(
        std::fs::read_to_string(&corpus)
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert!(first["title"].as_str().unwrap().starts_with("Item B"));
    assert!(!first["title"].as_str().unwrap().contains("  "));

    // build, twice for determinism
    let build = |dir: &Path, seed: &str| {
        revgen(&[
            "build",
            "--corpus",
            &p(&corpus),
            "--dataset-tag",
            "Arts",
            "--seed",
            seed,
            "--out-dir",
            &p(dir),
            "--train-size",
            "20",
            "--simple-size",
            "10",
            "--hard-size",
            "5",
        ])
    };
    let splits = d.join("splits");
    assert!(build(&splits, "7").status.success());
    assert!(build(&d.join("splits2"), "7").status.success());
    for f in [
        "train.jsonl",
        "simple_eval.jsonl",
        "hard_eval.jsonl",
        "manifest.json",
    ] {
        assert_eq!(
            std::fs::read(splits.join(f)).unwrap(),
            std::fs::read(d.join("splits2").join(f)).unwrap(),
            "{f}"
        );
    }
    let hard: Vec<GenerationSample> = read_jsonl(&splits.join("hard_eval.jsonl")).unwrap();
    assert_eq!(hard.len(), 5);
    assert!(hard.iter().all(|s| s.target_rating <= 2));
    let simple: Vec<GenerationSample> = read_jsonl(&splits.join("simple_eval.jsonl")).unwrap();
    assert_eq!(simple.len(), 10);
    assert!(simple
        .iter()
        .all(|s| s.history.len() > 9 && s.history.len() < 29));

    // prompts
    let prompts = d.join("prompts.jsonl");
    let simple_path = splits.join("simple_eval.jsonl");
    assert!(revgen(&[
        "prompt",
        "--split",
        &p(&simple_path),
        "--mode",
        "infer",
        "--with-ratings",
        "--out",
        &p(&prompts)
    ])
    .status
    .success());
    let sft = d.join("sft.jsonl");
    assert!(revgen(&[
        "prompt",
        "--split",
        &p(&splits.join("train.jsonl")),
        "--mode",
        "train",
        "--out",
        &p(&sft)
    ])
    .status
    .success());
    let sft_rows: Vec<PromptExample> = read_jsonl(&sft).unwrap();
    assert_eq!(sft_rows.len(), 20);
    assert!(sft_rows.iter().all(|e| !e.completion.is_empty()));
    let examples: Vec<PromptExample> = read_jsonl(&prompts).unwrap();

    // echo stub answers each prompt with its reference; a second stub returns noise
    let refs: HashMap<String, String> = simple
        .iter()
        .map(|s| (s.sample_id(), s.reference_review.clone()))
        .collect();
    let echo: HashMap<String, String> = examples
        .iter()
        .map(|e| (e.prompt.clone(), refs[&e.id].clone()))
        .collect();
    let echo_stub = start_stub(common::lookup_behavior(echo), Duration::ZERO).await;
    let noise_stub = start_stub(
        Box::new(|_: &str, call: usize| {
            let mut rng = revgen_core::rng::SplitMix64::new(call as u64);
            (
                StatusCode::OK,
                chat_body(&common::random_words(&mut rng, 8)),
            )
        }),
        Duration::ZERO,
    )
    .await;

    let cache = d.join("cache");
    let generate = |endpoint: String, system: &str, out: PathBuf| {
        vec![
            "generate".into(),
            "--prompts".into(),
            p(&prompts),
            "--endpoint".into(),
            endpoint,
            "--model".into(),
            "m".into(),
            "--system".into(),
            system.into(),
            "--parallel".into(),
            "3".into(),
            "--cache-dir".into(),
            p(&cache),
            "--out".into(),
            p(&out),
        ]
    };
    let gens_echo = d.join("gens_echo.jsonl");
    let gens_noise = d.join("gens_noise.jsonl");
    assert!(
        revgen_async(generate(v1(&echo_stub), "echo", gens_echo.clone()))
            .await
            .status
            .success()
    );
    assert!(
        revgen_async(generate(v1(&noise_stub), "noise", gens_noise.clone()))
            .await
            .status
            .success()
    );
    assert_eq!(echo_stub.calls(), 10);
    // same model + prompts: the noise run is served from the shared cache
    assert_eq!(noise_stub.calls(), 0);
    let noise_out = revgen_async(
        generate(v1(&noise_stub), "noise", gens_noise.clone())
            .into_iter()
            .chain(["--run-index".to_string(), "1".to_string()])
            .collect(),
    )
    .await;
    assert!(noise_out.status.success());
    assert_eq!(noise_stub.calls(), 10);

    // eval
    let eval = |gens: &Path, out: &Path| {
        revgen(&[
            "eval",
            "--gens",
            &p(gens),
            "--refs",
            &p(&simple_path),
            "--out",
            &p(out),
            "--split",
            "simple",
        ])
    };
    let row_echo = d.join("row_echo.json");
    let row_noise = d.join("row_noise.json");
    assert!(eval(&gens_echo, &row_echo).status.success());
    assert!(eval(&gens_noise, &row_noise).status.success());
    let echo: MetricsRow =
        serde_json::from_str(&std::fs::read_to_string(&row_echo).unwrap()).unwrap();
    let noise: MetricsRow =
        serde_json::from_str(&std::fs::read_to_string(&row_noise).unwrap()).unwrap();
    assert_eq!(
        (echo.rouge1, echo.rouge_l, echo.bert_mean),
        (100.0, 100.0, 100.0)
    );
    assert_eq!(echo.n_samples, 10);
    assert!(noise.rouge1 < 100.0 && noise.rouge_l < 100.0 && noise.bert_mean < 100.0);

    // report
    let report_dir = d.join("report");
    let out = revgen(&[
        "report",
        "--rows",
        &p(&row_echo),
        &p(&row_noise),
        "--out-dir",
        &p(&report_dir),
        "--manifest",
        &p(&splits.join("manifest.json")),
        "--note",
        "model=stub",
    ]);
    assert!(out.status.success());
    let md = std::fs::read_to_string(report_dir.join("report.md")).unwrap();
    assert!(
        md.contains("| echo | w/ rating | 100.00 | 100.00 | 100.00 |"),
        "{md}"
    );
    assert!(md.contains("model"));
    let csv = std::fs::read_to_string(report_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    // human-eval pairs and case studies
    let pairs = d.join("pairs.jsonl");
    let out = revgen(&[
        "pairs",
        "--split",
        &p(&simple_path),
        "--gens",
        &p(&gens_echo),
        &p(&gens_noise),
        "--n",
        "4",
        "--seed",
        "3",
        "--out",
        &p(&pairs),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count(), 8);
    let too_many = revgen(&[
        "pairs",
        "--split",
        &p(&simple_path),
        "--gens",
        &p(&gens_echo),
        "--n",
        "50",
        "--seed",
        "3",
        "--out",
        &p(&pairs),
    ]);
    assert!(!too_many.status.success());

    let ids = format!("{},{}", simple[0].sample_id(), simple[1].sample_id());
    let cases = d.join("cases.md");
    assert!(revgen(&[
        "cases",
        "--ids",
        &ids,
        "--split",
        &p(&simple_path),
        "--gens",
        &p(&gens_echo),
        &p(&gens_noise),
        "--out",
        &p(&cases)
    ])
    .status
    .success());
    let md = std::fs::read_to_string(&cases).unwrap();
    assert!(md.contains(&simple[0].reference_review));
    assert_eq!(md.matches("### echo").count(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn generate_exits_nonzero_on_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = tmp.path().join("prompts.jsonl");
    let lines: Vec<String> = (0..4)
        .map(|i| {
            json!({"id": format!("u{i}::i"), "prompt": format!("prompt {i}"), "completion": "",
                   "meta": {"dataset_tag": "A", "target_rating": 5, "include_ratings": true}})
            .to_string()
        })
        .collect();
    std::fs::write(&prompts, lines.join("\n") + "\n").unwrap();
    let answers: HashMap<String, String> = (0..4)
        .filter(|i| *i != 2)
        .map(|i| (format!("prompt {i}"), "ok".into()))
        .collect();
    let stub = start_stub(common::lookup_behavior(answers), Duration::ZERO).await;
    let out_path = tmp.path().join("gens.jsonl");
    let out = revgen_async(vec![
        "generate".into(),
        "--prompts".into(),
        p(&prompts),
        "--endpoint".into(),
        v1(&stub),
        "--model".into(),
        "m".into(),
        "--parallel".into(),
        "2".into(),
        "--no-cache".into(),
        "--out".into(),
        p(&out_path),
    ])
    .await;
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        std::fs::read_to_string(&out_path).unwrap().lines().count(),
        3
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("u2::i"));
}

#[test]
fn build_rejects_bad_neg_max_rating() {
    let out = revgen(&[
        "build",
        "--corpus",
        "x",
        "--dataset-tag",
        "A",
        "--seed",
        "1",
        "--out-dir",
        "y",
        "--neg-max-rating",
        "4",
    ]);
    assert!(!out.status.success());
}
