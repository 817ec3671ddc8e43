//! Sentence-embedding similarity with pluggable providers.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::rouge::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
}

/// Maps texts to fixed-dimension vectors. Same text, same vector, for the
/// lifetime of one provider instance.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
    fn name(&self) -> String;
}

/// Cosine similarity plus a flag for the degenerate zero-vector case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub zero_vector: bool,
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<Similarity, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(Similarity {
            value: 0.0,
            zero_vector: true,
        });
    }
    let value = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(Similarity {
        value,
        zero_vector: false,
    })
}

pub fn embedding_similarity(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<Similarity, EmbedError> {
    let mut v = batch_similarity(&[(candidate.to_string(), reference.to_string())], provider)?;
    Ok(v.remove(0))
}

/// Embeds every candidate and reference in one provider call.
pub fn batch_similarity(
    pairs: &[(String, String)],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Similarity>, EmbedError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = pairs
        .iter()
        .flat_map(|(c, r)| [c.clone(), r.clone()])
        .collect();
    let vectors = provider.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    vectors
        .chunks(2)
        .map(|pair| cosine(&pair[0], &pair[1]))
        .collect()
}

/// Offline provider: signed feature hashing of lowercase tokens.
///
/// Each token is hashed with 64-bit FNV-1a; the low bits pick a dimension and
/// bit 63 picks the sign. Identical texts get identical vectors, so identical
/// candidate and reference score exactly 1. Text with no tokens maps to the
/// zero vector.
#[derive(Debug, Clone)]
pub struct HashingProvider {
    dim: usize,
}

impl HashingProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        v
    }
}

impl Default for HashingProvider {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn name(&self) -> String {
        format!("hashing-{}", self.dim)
    }
}

/// Client for an OpenAI-style `POST {endpoint}/embeddings` service.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    batch_size: usize,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            batch_size: 64,
            client,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.endpoint))
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let unavailable = |e: reqwest::Error| EmbedError::ProviderUnavailable(e.to_string());
        let resp = req.send().map_err(unavailable)?;
        let resp = resp.error_for_status().map_err(unavailable)?;
        let mut body: EmbeddingResponse = resp.json().map_err(unavailable)?;
        if body.data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: body.data.len(),
            });
        }
        if body.data.iter().all(|d| d.index.is_some()) {
            body.data.sort_by_key(|d| d.index);
        }
        let out: Vec<Vec<f32>> = body.data.into_iter().map(|d| d.embedding).collect();
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.len() != first.len()) {
                return Err(EmbedError::DimensionMismatch {
                    left: first.len(),
                    right: bad.len(),
                });
            }
        }
        Ok(out)
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }

    fn name(&self) -> String {
        format!("{} @ {}", self.model, self.endpoint)
    }
}
