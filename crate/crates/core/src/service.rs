//! Read-only HTTP service over a frozen checkpoint.
//!
//! Routes: `GET /health`, `GET /items?offset&limit`, `GET /items/{id}` and
//! `POST /retrieve`. Errors are JSON `{"error": {"code", "message"}}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::engine::{Engine, ItemSummary, RetrieveRequest};
use crate::error::Error;

pub const BIND_ENV: &str = "CGIR_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<ItemSummary>,
}

/// An error response: status plus machine-readable code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound { .. } => StatusCode::NOT_FOUND,
            Error::DroppedAttribute(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Usage(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<Engine>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/items", get(items))
        .route("/items/{id}", get(item))
        .route("/retrieve", post(retrieve))
        .fallback(|| async {
            ApiError {
                status: StatusCode::NOT_FOUND,
                code: "not_found",
                message: "no such route".into(),
            }
        })
        .layer(CorsLayer::permissive())
        .with_state(engine)
}

async fn health(State(engine): State<Shared>) -> impl IntoResponse {
    Json(engine.health())
}

fn paging_param(params: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("`{key}` must be a non-negative integer, got `{raw}`"))),
    }
}

async fn items(
    State(engine): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<ItemPage>, ApiError> {
    if let Some(k) = params.keys().find(|k| *k != "offset" && *k != "limit") {
        return Err(ApiError::bad_request(format!("unknown query parameter `{k}`")));
    }
    let offset = paging_param(&params, "offset", 0)?;
    let limit = paging_param(&params, "limit", DEFAULT_PAGE)?;
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("`limit` must be in 1..={MAX_PAGE}, got {limit}")));
    }
    let total = engine.num_items();
    if offset > total {
        return Err(ApiError::bad_request(format!("`offset` {offset} is past the {total} items")));
    }
    Ok(Json(ItemPage {
        total,
        offset,
        limit,
        items: engine.items(offset, limit),
    }))
}

async fn item(State(engine): State<Shared>, Path(id): Path<String>) -> Result<Json<ItemSummary>, ApiError> {
    Ok(Json(engine.item_by_id(&id)?))
}

async fn retrieve(State(engine): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: RetrieveRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    let seq = tokio::task::spawn_blocking(move || engine.retrieve(&req))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })??;
    Ok(Json(seq).into_response())
}

/// Flag first, then `CGIR_BIND`, then the default.
pub fn resolve_bind(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(BIND_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
}

/// Binds and serves until ctrl-c.
pub async fn serve(engine: Engine, bind: &str) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| Error::Usage(format!("cannot bind {bind}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Error::Usage(e.to_string()))?;
    log::info!("serving {} items on http://{addr}", engine.num_items());
    axum::serve(listener, router(Arc::new(engine)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Data(format!("server error: {e}")))
}
