//! A small HTTP service that fronts an upstream embedding provider and
//! watermarks every embedding it returns.
//!
//! Endpoints:
//!
//! - `POST /v1/embed` `{"texts": ["..."]}` fetches upstream embeddings,
//!   injects the watermark, and returns the unit-norm results in order.
//!   There is no passthrough mode: every output is watermarked.
//! - `POST /v1/verify` runs the audit loop over caller-supplied
//!   suspect/original pairs and returns the verification report.
//! - `GET /healthz` reports liveness and a non-reversible key fingerprint.
//!
//! The key is loaded once at startup and shared read-only. Raw upstream
//! embeddings and key material never appear in responses, logs, or errors.

pub mod config;
pub mod service;
pub mod upstream;

pub use config::ProxyConfig;
pub use service::{router, serve, serve_on, AppState};
pub use upstream::{MockUpstream, UpstreamClient, UpstreamError};

use thiserror::Error;

/// Failures while standing the proxy up (not request-level errors).
#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("config: {0}")]
    Config(String),

    #[error("key: {0}")]
    Key(#[from] embedmark::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
