use std::io::Cursor;

use proptest::prelude::*;
use revgen_core::ingest::{self, CorpusRecord, ParsedLines, SkipCounts};
use serde_json::json;

fn record() -> impl Strategy<Value = CorpusRecord> {
    (
        "[A-Z0-9]{1,12}",
        "[A-Z0-9]{1,10}",
        1u8..=5,
        "\\PC{0,80}",
        "\\PC{0,20}",
        0i64..=i64::MAX,
        "[^\\s]\\PC{0,30}",
    )
        .prop_map(
            |(user_id, item_id, rating, review_text, summary, timestamp, title)| CorpusRecord {
                user_id,
                item_id,
                rating,
                review_text,
                summary,
                timestamp,
                title,
            },
        )
}

proptest! {
    #[test]
    fn corpus_lines_round_trip(rec in record()) {
        let line = serde_json::to_string(&rec).unwrap();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(ingest::parse_corpus_line(&line).unwrap(), rec);
    }

    #[test]
    fn raw_review_round_trip(rec in record()) {
        let line = json!({
            "reviewerID": rec.user_id,
            "asin": rec.item_id,
            "overall": rec.rating as f64,
            "reviewText": rec.review_text,
            "summary": rec.summary,
            "unixReviewTime": rec.timestamp,
        })
        .to_string();
        let r = ingest::parse_review_line(&line).unwrap();
        prop_assert_eq!((r.user_id, r.item_id, r.rating, r.timestamp), (rec.user_id, rec.item_id, rec.rating, rec.timestamp));
        prop_assert_eq!(r.review_text, rec.review_text);
    }

    /// Any byte soup yields read == parsed + skipped, never a panic.
    #[test]
    fn parsing_is_total(lines in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..60), 0..30)) {
        let mut data = Vec::new();
        for l in &lines {
            data.extend(l.iter().copied().filter(|b| *b != b'\n'));
            data.push(b'\n');
        }
        let mut counts = SkipCounts::default();
        let parsed: Vec<_> = ParsedLines::new(Cursor::new(data), ingest::parse_review_line, &mut counts).collect();
        prop_assert_eq!(counts.parsed as usize, parsed.len());
        prop_assert_eq!(counts.read, counts.parsed + counts.skipped_total());
    }

    #[test]
    fn normalized_titles_are_trimmed_and_single_spaced(raw in "\\PC{0,40}") {
        let t = ingest::normalize_title(&raw);
        prop_assert_eq!(t.trim(), t.as_str());
        prop_assert!(!t.contains("  "));
        prop_assert_eq!(ingest::normalize_title(&t), t.clone());
    }
}
