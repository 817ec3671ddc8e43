#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

use revgen_core::dataset::{GenerationSample, HistoryItem};
use revgen_core::ingest::CorpusRecord;
use revgen_core::metrics::HashingProvider;
use revgen_core::rng::SplitMix64;

/// What the stub returns for a given prompt and call number (0-based).
pub type Behavior = dyn Fn(&str, usize) -> (StatusCode, String) + Send + Sync;

pub struct StubState {
    pub calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub prompts_seen: std::sync::Mutex<Vec<String>>,
    behavior: Box<Behavior>,
    delay: Duration,
}

pub struct StubServer {
    pub addr: SocketAddr,
    pub state: Arc<StubState>,
    task: tokio::task::JoinHandle<()>,
}

impl StubServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub fn chat_body(content: &str) -> String {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

async fn chat(State(state): State<Arc<StubState>>, body: Bytes) -> Response {
    let call = state.calls.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    let prompt = serde_json::from_slice::<Value>(&body)
        .ok()
        .and_then(|v| {
            v.pointer("/messages/0/content")
                .and_then(Value::as_str)
                .map(String::from)
        })
        .unwrap_or_default();
    state.prompts_seen.lock().unwrap().push(prompt.clone());
    let (status, body) = (state.behavior)(&prompt, call);
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    (status, [("content-type", "application/json")], body).into_response()
}

async fn embeddings(body: Bytes) -> Response {
    let v: Value = serde_json::from_slice(&body).unwrap_or_default();
    let provider = HashingProvider::new(64);
    let inputs: Vec<String> = v["input"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(|x| x.as_str().map(String::from))
                .collect()
        })
        .unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(
            |(i, t)| json!({"object": "embedding", "index": i, "embedding": provider.embed_one(t)}),
        )
        .collect();
    axum::Json(json!({"object": "list", "data": data})).into_response()
}

pub async fn start_stub(behavior: Box<Behavior>, delay: Duration) -> StubServer {
    let state = Arc::new(StubState {
        calls: AtomicUsize::new(0),
        in_flight: AtomicUsize::new(0),
        max_in_flight: AtomicUsize::new(0),
        prompts_seen: Default::default(),
        behavior,
        delay,
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let task = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    StubServer { addr, state, task }
}

/// Endpoint base the client should be pointed at.
pub fn v1(stub: &StubServer) -> String {
    format!("{}/v1", stub.url())
}

/// Replies with the text mapped to the prompt, or 404 when unknown.
pub fn lookup_behavior(answers: HashMap<String, String>) -> Box<Behavior> {
    Box::new(move |prompt, _| match answers.get(prompt) {
        Some(a) => (StatusCode::OK, chat_body(a)),
        None => (
            StatusCode::NOT_FOUND,
            "{\"error\":\"unknown prompt\"}".into(),
        ),
    })
}

const WORDS: &[&str] = &[
    "great", "glue", "paint", "brush", "color", "quality", "cheap", "broke", "love", "hate",
    "easy", "hard", "gift", "daughter", "project", "canvas", "yarn", "needle", "soft", "bright",
    "dull", "leaked", "perfect", "return", "works", "fine", "would", "buy", "again", "not",
];

/// Deterministic pseudo-random sentence of `len` words.
pub fn random_words(rng: &mut SplitMix64, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.bounded(WORDS.len() as u64) as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Synthetic corpus: `users` users with interaction counts spread over 5..35,
/// about a third of final ratings negative.
pub fn synthetic_corpus(users: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    for u in 0..users {
        let n = 5 + rng.bounded(31) as usize;
        for k in 0..n {
            let item = format!("B{:05}", rng.bounded(5000));
            let rating = 1 + rng.bounded(5) as u8;
            let words = 4 + rng.bounded(12) as usize;
            out.push(CorpusRecord {
                user_id: format!("U{u:05}"),
                item_id: item.clone(),
                rating,
                review_text: random_words(&mut rng, words),
                summary: String::new(),
                timestamp: 1_400_000_000 + (k as i64) * 86_400 + rng.bounded(3) as i64,
                title: format!("Item {item}"),
            });
        }
    }
    out
}

/// A small sample with a two-item history, used by golden-file tests.
pub fn golden_sample() -> GenerationSample {
    GenerationSample {
        user_id: "A1".into(),
        dataset_tag: "Arts_Crafts_and_Sewing".into(),
        history: vec![
            HistoryItem {
                item_id: "B001".into(),
                title: "Glue Gun".into(),
                review_text: "Great glue, holds everything.".into(),
                rating: 5,
                timestamp: 1_406_073_600,
            },
            HistoryItem {
                item_id: "B002".into(),
                title: "Paint Brushes".into(),
                review_text: "Bristles shed a bit.".into(),
                rating: 3,
                timestamp: 1_406_160_000,
            },
        ],
        target_item_id: "B003".into(),
        target_title: "Acrylic Paint Set".into(),
        target_rating: 2,
        target_timestamp: 1_406_246_400,
        reference_review: "Colors were dull and two tubes leaked.".into(),
    }
}

pub fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
