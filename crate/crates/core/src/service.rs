//! HTTP API for human labeling sessions.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /sessions` | experiment config | `201 {session_id}` |
//! | `GET /sessions` | | list of progress snapshots |
//! | `GET /sessions/{id}/batch` | | `{batch_id, instances, class_names}` |
//! | `POST /sessions/{id}/labels` | `{batch_id, labels:[{id,label}]}` | `{status}` |
//! | `GET /sessions/{id}/progress` | | `{iteration, num_labeled, curve, status}` |
//!
//! Labels may be given as class indices or class names. Training runs on the
//! blocking pool after the labels are logged, so `POST .../labels` returns
//! `{"status":"training"}` right away and clients poll progress.
//!
//! Errors are `{error, detail}` with `error` one of `bad_request`,
//! `not_found`, `stale_batch`, `invalid_labels`, `not_awaiting_labels`, or
//! `internal`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelSchema;
use crate::error::Error;
use crate::oracle::{CurvePoint, InstanceView, SessionSlot, SessionStatus, SessionStore, SessionView, SubmitOutcome};
use crate::runner::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                detail: detail.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let detail = e.to_string();
        match e {
            Error::SessionNotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", detail),
            Error::StaleBatch { .. } => Self::new(StatusCode::CONFLICT, "stale_batch", detail),
            Error::SessionState(_) => Self::new(StatusCode::CONFLICT, "not_awaiting_labels", detail),
            Error::IncompleteLabels { .. } | Error::InvalidClass { .. } | Error::UnknownClass(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_labels", detail)
            }
            Error::Config(_)
            | Error::InvalidSchema(_)
            | Error::InvalidSplit(_)
            | Error::InsufficientClass { .. }
            | Error::InsufficientPool { .. }
            | Error::EmptyDataset
            | Error::MalformedRecord { .. }
            | Error::Io { .. } => Self::new(StatusCode::BAD_REQUEST, "bad_request", detail),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A label given either as a class index or as a class name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Index(usize),
    Name(String),
}

impl LabelValue {
    fn resolve(&self, schema: &LabelSchema) -> Result<usize, Error> {
        match self {
            LabelValue::Index(i) => {
                schema.check_class(*i)?;
                Ok(*i)
            }
            LabelValue::Name(name) => schema.index_of(name).ok_or_else(|| Error::UnknownClass(name.clone())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: usize,
    pub label: LabelValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub batch_id: u64,
    pub labels: Vec<LabelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReply {
    pub batch_id: u64,
    pub instances: Vec<InstanceView>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitReply {
    pub status: SessionStatus,
    /// `true` when the batch had already been applied with the same labels.
    #[serde(default)]
    pub already_applied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressReply {
    pub session_id: String,
    pub iteration: usize,
    pub num_labeled: usize,
    pub curve: Vec<CurvePoint>,
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl From<SessionView> for ProgressReply {
    fn from(v: SessionView) -> Self {
        Self {
            session_id: v.session_id,
            iteration: v.iteration,
            num_labeled: v.num_labeled,
            curve: v.curve,
            status: v.status,
            error: v.error,
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<SessionStore>,
}

/// Builds the API router over a session store.
pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/:id/batch", get(get_batch))
        .route("/sessions/:id/labels", post(post_labels))
        .route("/sessions/:id/progress", get(get_progress))
        .with_state(AppState { store })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
        )),
    }
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<serde_json::Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let Json(raw) = body?;
    let cfg = ExperimentConfig::from_json(&raw.to_string())?;
    let store = Arc::clone(&state.store);
    let slot = blocking(move || store.create(cfg)).await?;
    let session_id = slot.view().session_id;
    tracing::info!(%session_id, "session created");
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id })))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<ProgressReply>> {
    Json(state.store.list().into_iter().map(ProgressReply::from).collect())
}

async fn get_batch(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<BatchReply>> {
    let view = state.store.get(&id)?.view();
    match view.batch {
        Some(batch) => Ok(Json(BatchReply {
            batch_id: batch.batch_id,
            instances: batch.instances,
            class_names: view.class_names,
        })),
        None => Err(Error::SessionState(view.status.to_string()).into()),
    }
}

async fn post_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<LabelSubmission>, JsonRejection>,
) -> ApiResult<Json<SubmitReply>> {
    let Json(submission) = body?;
    let slot: Arc<SessionSlot> = state.store.get(&id)?;
    let schema = LabelSchema::new(slot.view().class_names)?;
    let labels = submission
        .labels
        .iter()
        .map(|entry| Ok((entry.id, entry.label.resolve(&schema)?)))
        .collect::<Result<Vec<_>, Error>>()?;

    let accept_slot = Arc::clone(&slot);
    let batch_id = submission.batch_id;
    let outcome = blocking(move || accept_slot.accept(batch_id, &labels)).await?;
    if outcome == SubmitOutcome::Accepted {
        let train_slot = Arc::clone(&slot);
        tokio::task::spawn_blocking(move || {
            if let Err(e) = train_slot.train() {
                tracing::error!(session_id = %id, error = %e, "training failed");
            }
        });
    }
    Ok(Json(SubmitReply {
        status: slot.view().status,
        already_applied: outcome == SubmitOutcome::AlreadyApplied,
    }))
}

async fn get_progress(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProgressReply>> {
    Ok(Json(state.store.get(&id)?.view().into()))
}

/// Opens the store and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, store_dir: PathBuf) -> crate::Result<()> {
    let store = tokio::task::spawn_blocking(move || SessionStore::open(store_dir))
        .await
        .map_err(|e| Error::Config(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    tracing::info!(addr = %listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?, "listening");
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
