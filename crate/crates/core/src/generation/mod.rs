//! Candidate review generation against chat-completions endpoints.
//!
//! Any server that accepts `POST {endpoint}/chat/completions` with the usual
//! `model` / `messages` / `temperature` / `max_tokens` body works, whether it
//! hosts a baseline model or a locally served fine-tuned one. Responses are
//! cached by request content so interrupted runs resume without re-paying for
//! finished requests.

pub mod cache;

use std::path::Path;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use cache::{CacheEntry, CacheKeyParts, ResponseCache};

use crate::io::{self, IoError};

pub const API_KEY_ENV: &str = "REVGEN_API_KEY";

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
    pub api_key: Option<String>,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base: Duration,
    /// Separates cache entries of repeated runs (e.g. `run-3`).
    pub cache_namespace: String,
}

impl GenConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_new_tokens: 256,
            timeout: Duration::from_secs(120),
            max_retries: 5,
            api_key: None,
            backoff_base: Duration::from_millis(500),
            cache_namespace: String::new(),
        }
    }

    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    fn validate(&self) -> Result<(), String> {
        if self.max_new_tokens < 1 {
            return Err("max_new_tokens must be at least 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        Ok(())
    }

    pub fn cache_key(&self, prompt: &str) -> String {
        CacheKeyParts {
            model: &self.model_name,
            prompt,
            temperature: self.temperature,
            max_tokens: self.max_new_tokens,
            namespace: &self.cache_namespace,
        }
        .key()
    }
}

/// One line of `gens_<system>.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReview {
    pub sample_id: String,
    #[serde(rename = "system")]
    pub system_name: String,
    pub text: String,
    pub latency_ms: u64,
    pub cached: bool,
    #[serde(skip)]
    pub retries: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("{sample_id}: endpoint unreachable: {message}")]
    EndpointUnreachable { sample_id: String, message: String },
    #[error("{sample_id}: still failing with HTTP {status} after {attempts} attempts")]
    RateLimitedExhausted {
        sample_id: String,
        status: u16,
        attempts: u32,
    },
    #[error("{sample_id}: HTTP {status}: {body}")]
    UnexpectedStatus {
        sample_id: String,
        status: u16,
        body: String,
    },
    #[error("{sample_id}: malformed response: {message}")]
    MalformedResponse { sample_id: String, message: String },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cache(#[from] IoError),
}

impl GenError {
    pub fn sample_id(&self) -> Option<&str> {
        match self {
            GenError::EndpointUnreachable { sample_id, .. }
            | GenError::RateLimitedExhausted { sample_id, .. }
            | GenError::UnexpectedStatus { sample_id, .. }
            | GenError::MalformedResponse { sample_id, .. } => Some(sample_id),
            GenError::InvalidConfig(_) | GenError::Cache(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GenError::EndpointUnreachable { .. } => "endpoint_unreachable",
            GenError::RateLimitedExhausted { .. } => "rate_limited_exhausted",
            GenError::UnexpectedStatus { .. } => "unexpected_status",
            GenError::MalformedResponse { .. } => "malformed_response",
            GenError::InvalidConfig(_) => "invalid_config",
            GenError::Cache(_) => "cache",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFailure {
    pub sample_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Successful generations, in input order.
    pub reviews: Vec<GeneratedReview>,
    pub failures: Vec<GenFailure>,
}

/// A prompt to send, keyed by the sample it belongs to.
#[derive(Debug, Clone)]
pub struct PromptJob {
    pub sample_id: String,
    pub prompt: String,
}

pub struct GenerationClient {
    http: reqwest::Client,
    cfg: GenConfig,
    system_name: String,
    cache: Option<ResponseCache>,
}

impl GenerationClient {
    pub fn new(
        cfg: GenConfig,
        system_name: impl Into<String>,
        cache: Option<ResponseCache>,
    ) -> Result<Self, GenError> {
        cfg.validate().map_err(GenError::InvalidConfig)?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GenError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            http,
            cfg,
            system_name: system_name.into(),
            cache,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.cfg.endpoint_url.trim_end_matches('/')
        )
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.cfg.backoff_base;
        let exp = base.saturating_mul(1u32 << attempt.min(16));
        let jitter_ms = base.as_millis() as u64;
        let jitter = if jitter_ms == 0 {
            0
        } else {
            rand::rng().random_range(0..=jitter_ms)
        };
        exp + Duration::from_millis(jitter)
    }

    pub async fn generate(
        &self,
        sample_id: &str,
        prompt: &str,
    ) -> Result<GeneratedReview, GenError> {
        let key = self.cfg.cache_key(prompt);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(GeneratedReview {
                sample_id: sample_id.to_string(),
                system_name: self.system_name.clone(),
                text: hit.text,
                latency_ms: hit.latency_ms,
                cached: true,
                retries: 0,
            });
        }

        let body = json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_new_tokens,
        });
        let started = Instant::now();
        let mut attempt = 0u32;
        let text = loop {
            let mut req = self.http.post(self.url()).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send().await {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let bytes =
                            resp.bytes()
                                .await
                                .map_err(|e| GenError::MalformedResponse {
                                    sample_id: sample_id.to_string(),
                                    message: e.to_string(),
                                })?;
                        break extract_content(&bytes).map_err(|message| {
                            GenError::MalformedResponse {
                                sample_id: sample_id.to_string(),
                                message,
                            }
                        })?;
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        let body = resp.text().await.unwrap_or_default();
                        return Err(GenError::UnexpectedStatus {
                            sample_id: sample_id.to_string(),
                            status: status.as_u16(),
                            body: body.chars().take(500).collect(),
                        });
                    }
                    if attempt >= self.cfg.max_retries {
                        return Err(GenError::RateLimitedExhausted {
                            sample_id: sample_id.to_string(),
                            status: status.as_u16(),
                            attempts: attempt + 1,
                        });
                    }
                    tracing::debug!(sample_id, status = status.as_u16(), attempt, "retrying");
                }
                Err(e) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(GenError::EndpointUnreachable {
                            sample_id: sample_id.to_string(),
                            message: e.to_string(),
                        });
                    }
                    tracing::debug!(sample_id, error = %e, attempt, "retrying after transport error");
                }
            }
            tokio::time::sleep(self.backoff(attempt)).await;
            attempt += 1;
        };

        let latency_ms = started.elapsed().as_millis() as u64;
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                model: self.cfg.model_name.clone(),
                text: text.clone(),
                latency_ms,
            })?;
        }
        Ok(GeneratedReview {
            sample_id: sample_id.to_string(),
            system_name: self.system_name.clone(),
            text,
            latency_ms,
            cached: false,
            retries: attempt,
        })
    }

    /// Runs every job with at most `parallelism` requests in flight. Results
    /// keep input order; failures are collected rather than aborting the run.
    pub async fn batch_generate(&self, jobs: &[PromptJob], parallelism: usize) -> BatchOutcome {
        let parallelism = parallelism.max(1);
        let results: Vec<_> = stream::iter(jobs)
            .map(|job| async move { (job, self.generate(&job.sample_id, &job.prompt).await) })
            .buffered(parallelism)
            .collect()
            .await;
        let mut outcome = BatchOutcome::default();
        for (job, result) in results {
            match result {
                Ok(review) => outcome.reviews.push(review),
                Err(e) => outcome.failures.push(GenFailure {
                    sample_id: job.sample_id.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
        outcome
    }
}

/// Pulls `choices[0].message.content` out of a response body, trimmed.
pub fn extract_content(body: &[u8]) -> Result<String, String> {
    let value: Value = serde_json::from_slice(body).map_err(|e| format!("invalid JSON: {e}"))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(|s| s.trim().to_string())
        .ok_or_else(|| "missing choices[0].message.content".to_string())
}

pub fn write_generations(path: &Path, reviews: &[GeneratedReview]) -> Result<usize, IoError> {
    io::write_jsonl(path, reviews)
}

pub fn read_generations(path: &Path) -> Result<Vec<GeneratedReview>, IoError> {
    io::read_jsonl(path)
}
