//! Upstream embedding providers.
//!
//! The production path is a generic HTTP JSON provider speaking
//! `POST {"texts": [...]} -> {"embeddings": [[...]]}`. The mock upstream
//! hashes each text into a seeded unit vector; it is deterministic across
//! runs, which makes loopback tests and local audits reproducible.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

use embedmark::corpus::seeded_unit_vector;
use embedmark::linalg::Vector;

#[derive(Debug, Error)]
pub enum UpstreamError {
    #[error("upstream request failed: {0}")]
    Request(String),

    #[error("upstream returned {got} embeddings for {want} texts")]
    CountMismatch { want: usize, got: usize },

    #[error("upstream embedding invalid: {0}")]
    InvalidEmbedding(String),
}

/// One embedding per input text, all of the configured dimension.
#[async_trait]
pub trait UpstreamClient: Send + Sync {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, UpstreamError>;
}

/// Deterministic text-to-vector upstream for tests and local loopback.
#[derive(Debug, Clone)]
pub struct MockUpstream {
    dim: usize,
    seed: u64,
}

impl MockUpstream {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    /// The embedding this upstream returns for `text`.
    pub fn embedding_for(&self, text: &str) -> Vector {
        seeded_unit_vector(self.dim, self.seed ^ fnv1a(text.as_bytes()))
            .expect("positive dimension")
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01B3);
    }
    hash
}

#[async_trait]
impl UpstreamClient for MockUpstream {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, UpstreamError> {
        Ok(texts.iter().map(|t| self.embedding_for(t)).collect())
    }
}

#[derive(Serialize)]
struct HttpEmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct HttpEmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Generic HTTP JSON embedding provider. Requests run on the blocking pool,
/// bounded by the configured timeout.
#[derive(Clone)]
pub struct HttpUpstream {
    url: String,
    auth_token: Option<String>,
    agent: ureq::Agent,
}

impl HttpUpstream {
    pub fn new(url: String, auth_token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self {
            url,
            auth_token,
            agent,
        }
    }

    fn embed_blocking(&self, texts: &[String]) -> Result<Vec<Vector>, UpstreamError> {
        let mut request = self.agent.post(&self.url);
        if let Some(token) = &self.auth_token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(HttpEmbedRequest { texts })
            .map_err(|e| UpstreamError::Request(e.to_string()))?;
        let body: HttpEmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| UpstreamError::Request(e.to_string()))?;
        if body.embeddings.len() != texts.len() {
            return Err(UpstreamError::CountMismatch {
                want: texts.len(),
                got: body.embeddings.len(),
            });
        }
        body.embeddings
            .into_iter()
            .map(|values| {
                Vector::new(values).map_err(|e| UpstreamError::InvalidEmbedding(e.to_string()))
            })
            .collect()
    }
}

#[async_trait]
impl UpstreamClient for HttpUpstream {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, UpstreamError> {
        let client = self.clone();
        let texts = texts.to_vec();
        tokio::task::spawn_blocking(move || client.embed_blocking(&texts))
            .await
            .map_err(|e| UpstreamError::Request(format!("worker task failed: {e}")))?
    }
}

/// Parse `mock://?seed=N` into its seed; `None` for non-mock URLs.
pub fn parse_mock_url(url: &str) -> Option<u64> {
    let rest = url.strip_prefix("mock://")?;
    let seed = rest
        .trim_start_matches('?')
        .split('&')
        .find_map(|kv| kv.strip_prefix("seed="))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    Some(seed)
}
