//! HTTP annotation service.
//!
//! | route | |
//! |---|---|
//! | `POST /sessions` | config (JSON or TOML) → `{id}` |
//! | `GET /sessions/{id}` | status, κ, budget |
//! | `GET /sessions/{id}/pending` | queries with 2-D coordinates and labeled neighbors |
//! | `POST /sessions/{id}/labels` | `[{sample_id, label}]` → `{accepted, rejected}` |
//! | `GET /sessions/{id}/projection` | every pool sample with cluster and labeled flag |
//! | `GET /sessions/{id}/metrics` | metric rows so far |
//! | `GET /health` | liveness |

mod session;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eigenloop_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::config::ExperimentConfig;
use crate::error::AppError;

pub use session::{
    LabelOutcome, Neighbor, PendingItem, ProjectedPoint, Rejected, Session, SessionManager,
    SessionStatus, Status, NEIGHBORS,
};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self { status, error: error.into(), field: None }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        let status = match &e {
            AppError::Config { .. } | AppError::Format { .. } => StatusCode::BAD_REQUEST,
            AppError::Core(CoreError::Training { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            AppError::Core(_) => StatusCode::BAD_REQUEST,
            AppError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            field: e.field().map(str::to_string),
            error: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionManager>,
}

pub fn router(sessions: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/pending", get(pending))
        .route("/sessions/{id}/labels", post(post_labels))
        .route("/sessions/{id}/projection", get(projection))
        .route("/sessions/{id}/metrics", get(metrics))
        .with_state(AppState { sessions })
}

/// Parses a session config from a JSON or TOML body.
pub fn parse_config(body: &str) -> Result<ExperimentConfig, AppError> {
    if body.trim_start().starts_with('{') {
        let cfg: ExperimentConfig =
            serde_json::from_str(body).map_err(|e| AppError::config("body", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    } else {
        ExperimentConfig::from_toml(body)
    }
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    Uuid::parse_str(id)
        .ok()
        .and_then(|u| state.sessions.get(&u))
        .ok_or_else(|| ApiError::not_found(id))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    sessions: usize,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok", sessions: state.sessions.len() })
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn create_session(State(state): State<AppState>, body: String) -> Result<(StatusCode, Json<Created>), ApiError> {
    let cfg = parse_config(&body)?;
    let session = tokio::task::spawn_blocking(move || Session::create(&cfg))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = state.sessions.insert(session);
    log::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(Created { id: id.to_string() })))
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionStatus> {
    Ok(Json(lookup(&state, &id)?.status()))
}

async fn pending(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<PendingItem>> {
    Ok(Json(lookup(&state, &id)?.pending()))
}

async fn projection(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<ProjectedPoint>> {
    Ok(Json(lookup(&state, &id)?.projection()))
}

#[derive(Serialize)]
struct Metrics {
    status: Status,
    rows: Vec<eigenloop_core::transfer::MetricsRow>,
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Metrics> {
    let (status, rows) = lookup(&state, &id)?.metrics();
    Ok(Json(Metrics { status, rows }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelAnswer {
    pub sample_id: u64,
    pub label: usize,
}

async fn post_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<LabelOutcome> {
    let session = lookup(&state, &id)?;
    let answers: Vec<LabelAnswer> = serde_json::from_str(&body).map_err(|e| ApiError {
        field: Some("body".into()),
        ..ApiError::new(StatusCode::BAD_REQUEST, format!("expected [{{sample_id, label}}]: {e}"))
    })?;
    let pairs: Vec<(u64, usize)> = answers.iter().map(|a| (a.sample_id, a.label)).collect();
    let (outcome, ready) = session.submit(&pairs).map_err(|status| match status {
        Status::Stepping => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "session is stepping; retry shortly"),
        Status::Finished => ApiError::new(StatusCode::BAD_REQUEST, "session is finished"),
        _ => ApiError::new(StatusCode::BAD_REQUEST, "session failed"),
    })?;
    if ready {
        tokio::task::spawn_blocking(move || session.step());
    }
    Ok(Json(outcome))
}

/// Serves until SIGINT, then checkpoints every session.
pub async fn serve(addr: SocketAddr, sessions: Arc<SessionManager>) -> Result<(), AppError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::config("addr", format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map_or(addr, |a| a));
    axum::serve(listener, router(sessions.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io("<socket>", e))?;
    for path in sessions.checkpoint_all()? {
        log::info!("checkpoint written to {}", path.display());
    }
    Ok(())
}
