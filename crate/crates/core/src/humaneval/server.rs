//! HTTP JSON API over a [`SessionStore`], plus static hosting of the
//! annotation UI bundle.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::{parse_label, HumanEvalError, Session, SessionStore};
use crate::eval::EvalPair;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    /// Session the UI opens when none is given in its URL.
    pub default_session: Option<String>,
}

struct ApiError(HumanEvalError);

impl From<HumanEvalError> for ApiError {
    fn from(e: HumanEvalError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use HumanEvalError::*;
        let (status, code) = match &self.0 {
            InvalidPairsFile(_) => (StatusCode::BAD_REQUEST, "invalid_pairs"),
            InvalidSessionId(_) => (StatusCode::BAD_REQUEST, "invalid_session_id"),
            InvalidAnnotators(_) => (StatusCode::BAD_REQUEST, "invalid_annotators"),
            InvalidLabel(_) => (StatusCode::BAD_REQUEST, "invalid_label"),
            DuplicateSessionId(_) => (StatusCode::CONFLICT, "duplicate_session"),
            UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
            UnknownPair(_) => (StatusCode::NOT_FOUND, "unknown_pair"),
            CorruptSession { .. } | Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (
            status,
            Json(json!({ "error": code, "message": self.0.to_string() })),
        )
            .into_response()
    }
}

fn bad_request(message: String) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": "bad_request", "message": message })),
    )
        .into_response()
}

#[derive(Deserialize)]
struct CreateSession {
    session_id: String,
    pairs: Vec<EvalPair>,
    annotator_ids: Vec<String>,
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    let session = Session {
        session_id: body.session_id,
        pairs: body.pairs,
        annotator_ids: body.annotator_ids,
    };
    match app.store.create_session(session) {
        Ok(handle) => {
            let snap = handle.snapshot();
            let s = snap.session();
            (
                StatusCode::CREATED,
                Json(json!({
                    "session_id": s.session_id,
                    "n_pairs": s.pairs.len(),
                    "n_annotators": s.annotator_ids.len(),
                    "expected_judgments": s.expected_judgments(),
                })),
            )
                .into_response()
        }
        Err(e) => ApiError(e).into_response(),
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn next_pair(
    State(app): State<AppState>,
    Path(session_id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ApiError> {
    let handle = app.store.get(&session_id)?;
    Ok(Json(handle.next_pair(&q.annotator)?).into_response())
}

#[derive(Deserialize)]
struct SubmitBody {
    annotator_id: String,
    pair_id: String,
    label: Value,
}

async fn submit(
    State(app): State<AppState>,
    Path(session_id): Path<String>,
    body: Result<Json<SubmitBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return Ok(bad_request(e.body_text())),
    };
    let handle = app.store.get(&session_id)?;
    let label = parse_label(&body.label)?;
    let progress = handle.submit_judgment(&body.annotator_id, &body.pair_id, label)?;
    Ok(Json(json!({ "ok": true, "pair_id": body.pair_id, "progress": progress })).into_response())
}

async fn stats(
    State(app): State<AppState>,
    Path(session_id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(app.store.get(&session_id)?.aggregate()).into_response())
}

async fn export(
    State(app): State<AppState>,
    Path(session_id): Path<String>,
) -> Result<Response, ApiError> {
    let log = app.store.get(&session_id)?.export()?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], log).into_response())
}

async fn config(State(app): State<AppState>) -> Json<Value> {
    Json(json!({
        "session_id": app.default_session,
        "api_base": "",
        "sessions": app.store.session_ids(),
    }))
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>revgen annotation</title></head>\n<body><p>No annotation UI bundle is configured. Start the server with <code>--ui-dir</code>, or use the JSON API under <code>/sessions</code>.</p></body></html>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_INDEX)
}

/// Builds the router. Static files come from `ui_dir` when given.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_pair))
        .route("/sessions/{id}/judgments", post(submit))
        .route("/sessions/{id}/stats", get(stats))
        .route("/sessions/{id}/export", get(export))
        .route("/config", get(config))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// Binds `addr` and serves until the future is dropped or ctrl-c arrives.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
