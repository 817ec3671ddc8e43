use std::collections::BTreeMap;

use super::{MetricsRow, Split};

/// Audit footer appended to the markdown report.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

fn split_title(split: Split) -> &'static str {
    match split {
        Split::Simple => "Simple evaluation",
        Split::Hard => "Hard evaluation",
    }
}

/// One markdown table per split (rows sorted by system, then variant) and a
/// CSV carrying the same formatted numbers.
pub fn render_report(rows: &[MetricsRow], provenance: &Provenance) -> Report {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.split, &a.system_name, a.variant).cmp(&(b.split, &b.system_name, b.variant))
    });

    let mut md = String::from("# Review generation results\n");
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    csv.write_record([
        "split",
        "method",
        "variant",
        "ROUGE-1",
        "ROUGE-L",
        "BertScore (mean)",
        "n_samples",
        "n_runs",
    ])
    .expect("in-memory csv write");

    for split in [Split::Simple, Split::Hard] {
        let in_split: Vec<_> = sorted.iter().filter(|r| r.split == split).collect();
        if in_split.is_empty() {
            continue;
        }
        md.push_str(&format!("\n## {}\n\n", split_title(split)));
        md.push_str("| Method | Variant | ROUGE-1 | ROUGE-L | BertScore (mean) |\n");
        md.push_str("|---|---|---:|---:|---:|\n");
        for r in in_split {
            let (r1, rl, bs) = (fmt2(r.rouge1), fmt2(r.rouge_l), fmt2(r.bert_mean));
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                r.system_name.replace('|', "\\|"),
                r.variant.label(),
                r1,
                rl,
                bs
            ));
            csv.write_record([
                split.to_string(),
                r.system_name.clone(),
                r.variant.label().to_string(),
                r1,
                rl,
                bs,
                r.n_samples.to_string(),
                r.n_runs.to_string(),
            ])
            .expect("in-memory csv write");
        }
    }

    let mut footer: BTreeMap<String, String> = provenance.entries.clone();
    for r in &sorted {
        for (k, v) in &r.provenance {
            footer
                .entry(format!(
                    "{} ({}, {}) {k}",
                    r.system_name,
                    r.split,
                    r.variant.label()
                ))
                .or_insert_with(|| v.clone());
        }
    }
    if !footer.is_empty() {
        md.push_str("\n---\n\nProvenance:\n\n");
        for (k, v) in footer {
            md.push_str(&format!("- {k}: {v}\n"));
        }
    }

    let csv = String::from_utf8(csv.into_inner().expect("flush in-memory csv")).expect("utf-8 csv");
    Report { markdown: md, csv }
}
