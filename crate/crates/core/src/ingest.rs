//! Schema layer over raw review and item-metadata dumps.
//!
//! Raw review lines follow the public per-category Amazon dump schema
//! (`reviewerID`, `asin`, `overall`, `reviewText`, `summary`,
//! `unixReviewTime`); metadata lines carry `asin` and `title`. Ingest maps both
//! onto canonical records and joins titles in, counting every line it skips.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub review_text: String,
    pub summary: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemTitle {
    pub item_id: String,
    pub title: String,
}

/// One line of `corpus.jsonl`. Field order here is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub review_text: String,
    pub summary: String,
    pub timestamp: i64,
    pub title: String,
}

/// Why a raw line was not turned into a record. Callers count and move on.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SkipReason {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("rating {0} is not an integer")]
    NonIntegralRating(String),
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("empty title")]
    EmptyTitle,
}

impl SkipReason {
    /// Stable key used in drop reports.
    pub fn key(&self) -> &'static str {
        match self {
            SkipReason::MalformedLine(_) => "malformed_line",
            SkipReason::NonIntegralRating(_) => "non_integral_rating",
            SkipReason::RatingOutOfRange(_) => "rating_out_of_range",
            SkipReason::EmptyTitle => "empty_title",
        }
    }
}

fn parse_object(line: &str) -> Result<Map<String, Value>, SkipReason> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(SkipReason::MalformedLine("not a JSON object".into())),
        Err(e) => Err(SkipReason::MalformedLine(e.to_string())),
    }
}

fn required_id(map: &Map<String, Value>, key: &str) -> Result<String, SkipReason> {
    match map.get(key) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(SkipReason::MalformedLine(format!("empty {key}"))),
        Some(_) => Err(SkipReason::MalformedLine(format!("{key} is not a string"))),
        None => Err(SkipReason::MalformedLine(format!("missing {key}"))),
    }
}

fn optional_text(map: &Map<String, Value>, key: &str) -> Result<String, SkipReason> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(SkipReason::MalformedLine(format!("{key} is not a string"))),
    }
}

fn coerce_rating(value: Option<&Value>) -> Result<u8, SkipReason> {
    let number = match value {
        Some(Value::Number(n)) => n,
        Some(_) => return Err(SkipReason::MalformedLine("overall is not a number".into())),
        None => return Err(SkipReason::MalformedLine("missing overall".into())),
    };
    let rating = if let Some(i) = number.as_i64() {
        i
    } else {
        let f = number
            .as_f64()
            .ok_or_else(|| SkipReason::MalformedLine("overall is not a number".into()))?;
        if !f.is_finite() || f.fract() != 0.0 {
            return Err(SkipReason::NonIntegralRating(number.to_string()));
        }
        if f.abs() > 1e15 {
            return Err(SkipReason::RatingOutOfRange(f as i64));
        }
        f as i64
    };
    if (1..=5).contains(&rating) {
        Ok(rating as u8)
    } else {
        Err(SkipReason::RatingOutOfRange(rating))
    }
}

fn coerce_timestamp(value: Option<&Value>) -> Result<i64, SkipReason> {
    match value {
        Some(Value::Number(n)) => match n.as_i64() {
            Some(t) if t >= 0 => Ok(t),
            _ => Err(SkipReason::MalformedLine(format!(
                "unixReviewTime {n} is not a non-negative integer"
            ))),
        },
        Some(_) => Err(SkipReason::MalformedLine(
            "unixReviewTime is not a number".into(),
        )),
        None => Err(SkipReason::MalformedLine("missing unixReviewTime".into())),
    }
}

pub fn parse_review_line(line: &str) -> Result<ReviewRecord, SkipReason> {
    let map = parse_object(line)?;
    let user_id = required_id(&map, "reviewerID")?;
    let item_id = required_id(&map, "asin")?;
    let rating = coerce_rating(map.get("overall"))?;
    let timestamp = coerce_timestamp(map.get("unixReviewTime"))?;
    Ok(ReviewRecord {
        user_id,
        item_id,
        rating,
        review_text: optional_text(&map, "reviewText")?,
        summary: optional_text(&map, "summary")?,
        timestamp,
    })
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize_title(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_metadata_line(line: &str) -> Result<ItemTitle, SkipReason> {
    let map = parse_object(line)?;
    let item_id = required_id(&map, "asin")?;
    let title = match map.get("title") {
        None | Some(Value::Null) => return Err(SkipReason::EmptyTitle),
        Some(Value::String(s)) => normalize_title(s),
        Some(_) => return Err(SkipReason::MalformedLine("title is not a string".into())),
    };
    if title.is_empty() {
        return Err(SkipReason::EmptyTitle);
    }
    Ok(ItemTitle { item_id, title })
}

/// Parses a line of the canonical corpus format.
pub fn parse_corpus_line(line: &str) -> Result<CorpusRecord, SkipReason> {
    serde_json::from_str(line).map_err(|e| SkipReason::MalformedLine(e.to_string()))
}

/// Per-reason skip counters, serialized with sorted keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub read: u64,
    pub parsed: u64,
    pub skipped: BTreeMap<String, u64>,
}

impl SkipCounts {
    fn record(&mut self, reason: &SkipReason) {
        *self.skipped.entry(reason.key().to_string()).or_default() += 1;
    }

    pub fn skipped_total(&self) -> u64 {
        self.skipped.values().sum()
    }
}

/// Streams parsed values out of a line reader, counting skips. Bytes that are
/// not valid UTF-8 count as malformed lines; blank lines are ignored.
pub struct ParsedLines<'c, R, T> {
    reader: R,
    parse: fn(&str) -> Result<T, SkipReason>,
    counts: &'c mut SkipCounts,
    buf: Vec<u8>,
    io_error: Option<std::io::Error>,
}

impl<'c, R: BufRead, T> ParsedLines<'c, R, T> {
    pub fn new(
        reader: R,
        parse: fn(&str) -> Result<T, SkipReason>,
        counts: &'c mut SkipCounts,
    ) -> Self {
        Self {
            reader,
            parse,
            counts,
            buf: Vec::new(),
            io_error: None,
        }
    }

    /// The read error that ended the stream early, if any.
    pub fn take_io_error(&mut self) -> Option<std::io::Error> {
        self.io_error.take()
    }
}

impl<R: BufRead, T> Iterator for ParsedLines<'_, R, T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.io_error = Some(e);
                    return None;
                }
            }
            let line = match std::str::from_utf8(&self.buf) {
                Ok(s) => s.trim_end_matches(['\n', '\r']),
                Err(e) => {
                    self.counts.read += 1;
                    self.counts
                        .record(&SkipReason::MalformedLine(format!("invalid UTF-8: {e}")));
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            self.counts.read += 1;
            match (self.parse)(line) {
                Ok(value) => {
                    self.counts.parsed += 1;
                    return Some(value);
                }
                Err(reason) => self.counts.record(&reason),
            }
        }
    }
}

/// item_id → title. The first title seen for an item wins.
pub type TitleMap = HashMap<String, String>;

pub fn build_title_map(titles: impl IntoIterator<Item = ItemTitle>) -> TitleMap {
    let mut map = TitleMap::new();
    for t in titles {
        map.entry(t.item_id).or_insert(t.title);
    }
    map
}

/// Joins titles onto review records; records whose item has no title are
/// dropped and counted.
pub struct JoinTitles<'t, I> {
    records: I,
    titles: &'t TitleMap,
    dropped: u64,
}

pub fn join_titles<I>(records: I, titles: &TitleMap) -> JoinTitles<'_, I::IntoIter>
where
    I: IntoIterator<Item = ReviewRecord>,
{
    JoinTitles {
        records: records.into_iter(),
        titles,
        dropped: 0,
    }
}

impl<I> JoinTitles<'_, I> {
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

impl<I: Iterator<Item = ReviewRecord>> Iterator for JoinTitles<'_, I> {
    type Item = CorpusRecord;

    fn next(&mut self) -> Option<CorpusRecord> {
        for r in self.records.by_ref() {
            match self.titles.get(&r.item_id) {
                Some(title) => {
                    return Some(CorpusRecord {
                        title: title.clone(),
                        user_id: r.user_id,
                        item_id: r.item_id,
                        rating: r.rating,
                        review_text: r.review_text,
                        summary: r.summary,
                        timestamp: r.timestamp,
                    })
                }
                None => self.dropped += 1,
            }
        }
        None
    }
}

/// Drop report printed by `revgen ingest`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub reviews: SkipCounts,
    pub metadata: SkipCounts,
    pub missing_title: u64,
    pub emitted: u64,
}
