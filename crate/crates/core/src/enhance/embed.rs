//! Embedding clients. The engine treats sentence encoding as an external
//! service; every vector leaving this module is L2-normalized regardless of
//! what the service returned.
//!
//! Wire protocol: `POST {endpoint}/v1/embeddings` with body
//! `{"model", "input": [text, ...]}`; the reply carries one
//! `data[i].embedding` per input.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::normalize;

/// Env var naming the embedding endpoint.
pub const EMBED_ENDPOINT_VAR: &str = "ELLAGNN_EMBED_ENDPOINT";

/// An embedding backend producing fixed-width vectors.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Raw service vectors, one per input; callers normalize.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Embeds one non-empty text and L2-normalizes the result.
pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::Argument("cannot embed an empty text".into()));
    }
    let mut rows = embedder.embed_batch(&[text])?;
    if rows.len() != 1 {
        return Err(Error::Embedding(format!(
            "service returned {} vectors for 1 input",
            rows.len()
        )));
    }
    normalize(rows.remove(0)).map_err(|_| Error::Embedding("service returned a zero vector".into()))
}

/// Embeds a batch and L2-normalizes every row.
pub fn embed_batch_normalized(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
    let rows = embedder.embed_batch(texts)?;
    if rows.len() != texts.len() {
        return Err(Error::Embedding(format!(
            "service returned {} vectors for {} inputs",
            rows.len(),
            texts.len()
        )));
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            normalize(row)
                .map_err(|_| Error::Embedding(format!("service returned a zero vector at {i}")))
        })
        .collect()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedRow>,
}

#[derive(Deserialize)]
struct EmbedRow {
    embedding: Vec<f64>,
}

pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    http: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str, dim: usize, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Embedding(format!("building http client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            dim,
            http,
        })
    }

    pub fn from_env(model: &str, dim: usize, timeout: Duration) -> Result<Self> {
        let endpoint = std::env::var(EMBED_ENDPOINT_VAR)
            .map_err(|_| Error::Validation(format!("{EMBED_ENDPOINT_VAR} is not set")))?;
        Self::new(&endpoint, model, dim, timeout)
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/v1/embeddings", self.endpoint);
        let response = self
            .http
            .post(&url)
            .json(&EmbedRequest {
                model: &self.model,
                input: texts,
            })
            .send()
            .map_err(|e| Error::Embedding(format!("{url}: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Embedding(format!("{url}: status {status}")));
        }
        let parsed: EmbedResponse = response
            .json()
            .map_err(|e| Error::Embedding(format!("{url}: decoding response: {e}")))?;
        let rows: Vec<Vec<f64>> = parsed.data.into_iter().map(|r| r.embedding).collect();
        for row in &rows {
            if row.len() != self.dim {
                return Err(Error::Embedding(format!(
                    "{url}: expected dim {}, got {}",
                    self.dim,
                    row.len()
                )));
            }
        }
        Ok(rows)
    }
}

/// Hashed bag-of-tokens mock: each lowercased whitespace token adds ±1 to a
/// digest-chosen coordinate, so token overlap drives cosine similarity and
/// identical texts embed identically. Token-less texts map to the first
/// basis vector.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim }
    }
}

impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut acc = vec![0.0f64; self.dim];
                let mut any = false;
                for token in text.split_whitespace() {
                    any = true;
                    let digest = Sha256::digest(token.to_lowercase().as_bytes());
                    let idx = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dim;
                    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
                    acc[idx] += sign;
                }
                if !any || acc.iter().all(|&x| x == 0.0) {
                    acc = vec![0.0; self.dim];
                    acc[0] = 1.0;
                }
                acc
            })
            .collect())
    }
}
