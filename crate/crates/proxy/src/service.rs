//! Router, handlers, and server startup.

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;
use tracing::{error, info};

use embedmark::codec::{self, EmbeddingRecord};
use embedmark::corpus::RawRecord;
use embedmark::keygen::{load_key, WatermarkKey};
use embedmark::verifier::{self, VerificationReport};

use crate::config::ProxyConfig;
use crate::upstream::{parse_mock_url, HttpUpstream, MockUpstream, UpstreamClient, UpstreamError};
use crate::ProxyError;

/// Shared state: the key is loaded once and read-only afterwards.
pub struct AppState {
    pub key: Arc<WatermarkKey>,
    pub upstream: Box<dyn UpstreamClient>,
    pub max_batch: usize,
}

/// Request-level error carrying its HTTP status. Messages never contain key
/// material or embedding values.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
    pub watermarked: bool,
}

#[derive(Debug, Deserialize)]
pub struct VerifyRequest {
    pub suspect: Vec<RawRecord>,
    pub original: Vec<RawRecord>,
    pub contrast_suspect: Vec<RawRecord>,
    pub contrast_original: Vec<RawRecord>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    10.0
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/embed", post(embed))
        .route("/v1/verify", post(verify_endpoint))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "key_fingerprint": state.key.fingerprint(),
    }))
}

async fn embed(
    State(state): State<Arc<AppState>>,
    Json(request): Json<EmbedRequest>,
) -> Result<Json<EmbedResponse>, ApiError> {
    if request.texts.is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "texts must contain at least one entry",
        ));
    }
    if request.texts.len() > state.max_batch {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!(
                "batch of {} exceeds max_batch {}",
                request.texts.len(),
                state.max_batch
            ),
        ));
    }
    let upstream_embeddings = state.upstream.embed(&request.texts).await.map_err(|e| {
        error!(batch = request.texts.len(), "upstream embed failed");
        match e {
            UpstreamError::Request(_) | UpstreamError::CountMismatch { .. } => ApiError::new(
                StatusCode::BAD_GATEWAY,
                "upstream embedding provider unavailable; retry later",
            ),
            UpstreamError::InvalidEmbedding(_) => ApiError::new(
                StatusCode::BAD_GATEWAY,
                "upstream returned malformed embeddings; retry later",
            ),
        }
    })?;
    if upstream_embeddings.len() != request.texts.len() {
        return Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "upstream embedding provider unavailable; retry later",
        ));
    }

    let mut out = Vec::with_capacity(upstream_embeddings.len());
    for vector in &upstream_embeddings {
        if vector.dim() != state.key.n() {
            error!(
                got = vector.dim(),
                want = state.key.n(),
                "upstream dimension does not match the configured key"
            );
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "upstream dimension does not match the configured key",
            ));
        }
        let marked = codec::inject(&state.key, vector).map_err(|_| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "watermark injection failed",
            )
        })?;
        out.push(marked.into_values());
    }
    info!(batch = out.len(), "watermarked batch");
    Ok(Json(EmbedResponse {
        embeddings: out,
        dim: state.key.w(),
        watermarked: true,
    }))
}

fn to_records(raw: Vec<RawRecord>, field: &str) -> Result<Vec<EmbeddingRecord>, ApiError> {
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let id = r.id.clone();
            r.into_record(i + 1).map_err(|_| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    format!("{field}: invalid embedding for id '{id}'"),
                )
            })
        })
        .collect()
}

async fn verify_endpoint(
    State(state): State<Arc<AppState>>,
    Json(request): Json<VerifyRequest>,
) -> Result<Json<VerificationReport>, ApiError> {
    let suspect = to_records(request.suspect, "suspect")?;
    let original = to_records(request.original, "original")?;
    let contrast_suspect = to_records(request.contrast_suspect, "contrast_suspect")?;
    let contrast_original = to_records(request.contrast_original, "contrast_original")?;

    let report = verifier::verify(
        &state.key,
        &suspect,
        &original,
        &contrast_suspect,
        &contrast_original,
        request.threshold,
    )
    .map_err(|e| match e {
        embedmark::Error::IdMisalignment { .. }
        | embedmark::Error::DimensionMismatch { .. }
        | embedmark::Error::InvalidParameter(_)
        | embedmark::Error::Record { .. } => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "verification failed"),
    })?;
    info!(
        n_w = report.n_w,
        n_c = report.n_c,
        decision = ?report.decision,
        "verification complete"
    );
    Ok(Json(report))
}

/// Build state from a config: load the key, pick the upstream.
pub fn state_from_config(config: &ProxyConfig) -> Result<AppState, ProxyError> {
    config.validate()?;
    let key = Arc::new(load_key(&config.key_path)?);
    let timeout = Duration::from_secs(config.request_timeout_secs);
    let upstream: Box<dyn UpstreamClient> = match parse_mock_url(&config.upstream_url) {
        Some(seed) => Box::new(MockUpstream::new(key.n(), seed)),
        None => {
            let token = match &config.upstream_auth_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    ProxyError::Config(format!(
                        "environment variable '{var}' with the upstream credential is not set"
                    ))
                })?),
                None => None,
            };
            Box::new(HttpUpstream::new(
                config.upstream_url.clone(),
                token,
                timeout,
            ))
        }
    };
    Ok(AppState {
        key,
        upstream,
        max_batch: config.max_batch,
    })
}

/// Start serving on the configured listen address; runs until the process
/// is stopped.
pub async fn serve(config: ProxyConfig) -> Result<(), ProxyError> {
    let state = Arc::new(state_from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen_address).await?;
    serve_on(listener, state).await
}

/// Serve on an existing listener (used by tests to bind port 0).
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
) -> Result<(), ProxyError> {
    let addr = listener.local_addr()?;
    info!(%addr, fingerprint = %state.key.fingerprint(), "proxy listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
