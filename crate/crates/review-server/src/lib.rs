//! HTTP front end for the review store.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | GET | `/api/items` | `annotator`, `batch` (default 10) | `[ReviewItem]` |
//! | POST | `/api/votes` | `Vote` | `{"status": "stored" \| "unchanged"}` |
//! | GET | `/api/progress` | | `Progress` |
//! | GET | `/api/export` | | `Finalization` |
//!
//! Errors come back as `{"error": "..."}` with status 400 (malformed),
//! 401 (bad token) or 404 (unknown item or annotator). Anything outside
//! `/api` is served from the static directory when one is configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use litprobe::review::{Finalization, Progress, ReviewError, ReviewItem, ReviewStore, SubmitOutcome, Vote};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

pub struct AppState {
    store: Mutex<ReviewStore>,
    required: usize,
    token: Option<String>,
}

impl AppState {
    pub fn new(store: ReviewStore, required_annotators: usize, token: Option<String>) -> Arc<Self> {
        Arc::new(Self { store: Mutex::new(store), required: required_annotators, token })
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match e {
            ReviewError::UnknownItem(_) | ReviewError::UnknownAnnotator(_) => StatusCode::NOT_FOUND,
            ReviewError::Malformed(_) => StatusCode::BAD_REQUEST,
            ReviewError::Corrupt { .. } | ReviewError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Deserialize)]
struct ItemsQuery {
    annotator: String,
    #[serde(default = "default_batch")]
    batch: usize,
}

fn default_batch() -> usize {
    10
}

async fn items(
    State(st): State<Arc<AppState>>,
    Query(q): Query<ItemsQuery>,
) -> Result<Json<Vec<ReviewItem>>, ApiError> {
    let store = st.store.lock().unwrap();
    let items = store.next_items(&q.annotator, q.batch)?;
    Ok(Json(items.into_iter().cloned().collect()))
}

async fn votes(State(st): State<Arc<AppState>>, Json(body): Json<Value>) -> Result<Json<Value>, ApiError> {
    let mut vote: Vote =
        serde_json::from_value(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed vote: {e}")))?;
    if vote.timestamp_ms == 0 {
        vote.timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    }
    // The write is fsynced before we answer.
    let outcome = tokio::task::spawn_blocking(move || st.store.lock().unwrap().submit_vote(vote))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let status = match outcome {
        SubmitOutcome::Stored => "stored",
        SubmitOutcome::Unchanged => "unchanged",
    };
    Ok(Json(json!({ "status": status })))
}

async fn progress(State(st): State<Arc<AppState>>) -> Json<Progress> {
    Json(st.store.lock().unwrap().progress(st.required))
}

async fn export(State(st): State<Arc<AppState>>) -> Json<Finalization> {
    Json(st.store.lock().unwrap().finalize_unanimous(st.required))
}

async fn require_token(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong token".into()).into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/items", get(items))
        .route("/api/votes", post(votes))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review server listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await
}
