//! HTTP API for ingesting call records, browsing call trees and requesting
//! explanations.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/api/records` | NDJSON or JSON array of records |
//! | GET | `/api/processes?limit=N` | most recent processes first |
//! | GET | `/api/processes/{pid}/tree[?root=call_id]` | nested call tree |
//! | GET | `/api/processes/{pid}/ntriples` | RDF export |
//! | POST | `/api/explanations` | `{call_id, config}` |
//! | DELETE | `/api/explanations/{call_id}` | drop cached explanations |
//! | GET | `/api/providers` | registered text generators |

mod error;
mod tree_json;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use procsight_core::llm::ProviderRegistry;
use procsight_core::model::{GenerationConfig, MethodCallRecord};
use procsight_core::store::{RecordRejection, TraceStore};
use procsight_core::{build_forest, Explainer};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use error::{ApiError, ErrorBody};
pub use tree_json::{forest_json, write_subtree};

pub const BIND_ENV: &str = "PROCSIGHT_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const CORS_ENV: &str = "PROCSIGHT_CORS_ORIGIN";
pub const DEFAULT_PROCESS_LIMIT: usize = 20;
const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    explainer: Arc<Explainer>,
}

impl AppState {
    pub fn new(store: Arc<TraceStore>, providers: ProviderRegistry) -> Self {
        Self::from_explainer(Arc::new(Explainer::new(store, providers)))
    }

    pub fn from_explainer(explainer: Arc<Explainer>) -> Self {
        Self { explainer }
    }

    pub fn explainer(&self) -> &Arc<Explainer> {
        &self.explainer
    }

    pub fn store(&self) -> &Arc<TraceStore> {
        self.explainer.store()
    }
}

/// Allowed browser origins: `*` or a comma-separated list.
pub fn cors_layer(origin: &str) -> CorsLayer {
    let origins = if origin.trim() == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origin.split(',').filter_map(|o| HeaderValue::from_str(o.trim()).ok()))
    };
    CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/records", post(ingest))
        .route("/api/processes", get(list_processes))
        .route("/api/processes/{pid}/tree", get(get_tree))
        .route("/api/processes/{pid}/ntriples", get(export_ntriples))
        .route("/api/explanations", post(explain))
        .route("/api/explanations/{call_id}", delete(invalidate))
        .route("/api/providers", get(providers))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Bind address from `PROCSIGHT_BIND`.
pub fn bind_addr_from_env() -> Result<SocketAddr, String> {
    let raw = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_owned());
    raw.parse().map_err(|e| format!("{BIND_ENV}={raw}: {e}"))
}

pub fn cors_origin_from_env() -> String {
    std::env::var(CORS_ENV).unwrap_or_else(|_| "*".to_owned())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionBody {
    pub index: usize,
    /// `malformed`, `invalid` or `duplicate`.
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub accepted: usize,
    pub rejected: Vec<RejectionBody>,
}

/// Splits a request body into JSON values. A body whose first non-blank
/// byte is `[` is one JSON array; anything else is one value per line.
pub fn parse_ingest_body(body: &[u8]) -> Result<Vec<serde_json::Value>, String> {
    let text = std::str::from_utf8(body).map_err(|e| format!("body is not UTF-8: {e}"))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| format!("invalid JSON array: {e}"));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

async fn ingest(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body = body.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let values = parse_ingest_body(&body).map_err(ApiError::bad_request)?;

    let mut rejected = Vec::new();
    let mut records = Vec::with_capacity(values.len());
    let mut positions = Vec::with_capacity(values.len());
    for (index, value) in values.into_iter().enumerate() {
        match serde_json::from_value::<MethodCallRecord>(value) {
            Ok(r) => {
                records.push(r);
                positions.push(index);
            }
            Err(e) => rejected.push(RejectionBody { index, reason: "malformed".into(), detail: e.to_string() }),
        }
    }
    let store = state.store().clone();
    let report = blocking(move || Ok(store.append_records(records)?)).await?;
    for r in report.rejected {
        let reason = match r.reason {
            RecordRejection::Invalid(_) => "invalid",
            RecordRejection::Duplicate(_) => "duplicate",
        };
        rejected.push(RejectionBody { index: positions[r.index], reason: reason.into(), detail: r.reason.to_string() });
    }
    rejected.sort_by_key(|r| r.index);
    let status = if rejected.is_empty() { StatusCode::OK } else { StatusCode::MULTI_STATUS };
    Ok((status, Json(IngestResponse { accepted: report.accepted, rejected })).into_response())
}

async fn list_processes(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let limit = match params.get("limit") {
        None => DEFAULT_PROCESS_LIMIT,
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("limit must be a non-negative integer, got `{raw}`")))?,
    };
    Ok(Json(state.store().list_processes(limit)).into_response())
}

async fn get_tree(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let store = state.store().clone();
    let root = params.get("root").cloned();
    let json = blocking(move || {
        let records = store.records_for_process(&pid)?;
        let forest = build_forest(records)
            .map_err(|e| ApiError::new(StatusCode::CONFLICT, "inconsistent_trace", e.to_string()))?;
        Ok(match root {
            None => forest_json(&pid, forest.roots()),
            Some(id) => {
                let node = forest.get(&id).ok_or_else(|| {
                    ApiError::new(
                        StatusCode::NOT_FOUND,
                        "unknown_call_id",
                        format!("unknown call_id `{id}` in process `{pid}`"),
                    )
                })?;
                let mut out = String::new();
                write_subtree(&mut out, node);
                out
            }
        })
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
}

async fn export_ntriples(State(state): State<AppState>, Path(pid): Path<String>) -> Result<Response, ApiError> {
    let store = state.store().clone();
    let doc = blocking(move || Ok(store.export_ntriples(&pid)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/n-triples")], doc).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub call_id: String,
    #[serde(default)]
    pub config: GenerationConfig,
}

async fn explain(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body = body.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let request: ExplainRequest = serde_json::from_slice(&body).map_err(|e| {
        if e.is_data() {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string())
        } else {
            ApiError::bad_request(e.to_string())
        }
    })?;
    let explanation = state.explainer().explain(&request.call_id, &request.config).await?;
    Ok(Json(explanation).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidateResponse {
    pub removed: usize,
}

async fn invalidate(State(state): State<AppState>, Path(call_id): Path<String>) -> Result<Response, ApiError> {
    let explainer = state.explainer().clone();
    let removed = blocking(move || Ok(explainer.invalidate(&call_id)?)).await?;
    Ok(Json(InvalidateResponse { removed }).into_response())
}

async fn providers(State(state): State<AppState>) -> Response {
    Json(state.explainer().providers().list_providers()).into_response()
}
