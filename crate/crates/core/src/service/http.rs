//! JSON API over a registry of annotation sessions.
//!
//! Each session sits behind its own async mutex, which serializes mutations.
//! Propagation snapshots the manual labels under that mutex, computes on the
//! blocking pool without holding it, then re-locks to apply; labels submitted
//! meanwhile wait only for the snapshot and the apply step.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{Mutex, RwLock};

use super::session::{pool_key, AnnotationSession, SessionError};
use crate::model::Label;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("session id {0:?} is already registered")]
    DuplicateSession(String),
    #[error("pool {pool} is already used by session {session:?}")]
    PoolInUse { pool: PathBuf, session: String },
}

struct SessionHandle {
    session: Mutex<AnnotationSession>,
    /// Held for the whole of a propagation so two never overlap.
    propagation: Mutex<()>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<SessionHandle>>>>,
    pools: Arc<RwLock<HashMap<PathBuf, String>>>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Requires `Authorization: Bearer <token>` on every session route.
    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into().into());
        self
    }

    /// Registers a session over the pool manifest at `pool`. A pool may back
    /// at most one session.
    pub async fn insert(&self, pool: &Path, session: AnnotationSession) -> Result<(), RegistryError> {
        let key = pool_key(pool);
        let mut pools = self.pools.write().await;
        let mut sessions = self.sessions.write().await;
        let id = session.id().to_string();
        if sessions.contains_key(&id) {
            return Err(RegistryError::DuplicateSession(id));
        }
        if let Some(existing) = pools.get(&key) {
            return Err(RegistryError::PoolInUse { pool: key, session: existing.clone() });
        }
        pools.insert(key, id.clone());
        let handle = SessionHandle { session: Mutex::new(session), propagation: Mutex::new(()) };
        sessions.insert(id, Arc::new(handle));
        Ok(())
    }

    async fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    /// Runs `f` with the locked session, e.g. to export its manifest.
    pub async fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut AnnotationSession) -> T) -> Option<T> {
        let handle = self.sessions.read().await.get(id).cloned()?;
        let mut guard = handle.session.lock().await;
        Some(f(&mut guard))
    }

    pub async fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }
}

enum ApiError {
    UnknownSession(String),
    Session { err: SessionError, version: u64 },
    Unauthorized,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message, version) = match self {
            ApiError::UnknownSession(id) => {
                (StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"), 0)
            }
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token".into(), 0),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m, 0),
            ApiError::Session { err, version } => {
                let (status, code) = match &err {
                    SessionError::SessionClosed => (StatusCode::GONE, "session_closed"),
                    SessionError::UnknownSample(_) => (StatusCode::NOT_FOUND, "unknown_sample"),
                    SessionError::ConflictingManualLabel { .. } => (StatusCode::CONFLICT, "conflicting_manual_label"),
                    SessionError::EmptySeedClass(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_seed_class"),
                    SessionError::AutoLabel(_) | SessionError::Io(_) => {
                        (StatusCode::INTERNAL_SERVER_ERROR, "internal")
                    }
                };
                (status, code, err.to_string(), version)
            }
        };
        (status, Json(json!({ "error": code, "message": message, "state_version": version }))).into_response()
    }
}

fn session_err(version: u64) -> impl FnOnce(SessionError) -> ApiError {
    move |err| ApiError::Session { err, version }
}

/// Merges `state_version` into a serialized body.
fn versioned(version: u64, body: impl serde::Serialize) -> Json<Value> {
    let mut v = serde_json::to_value(body).expect("response serialize");
    if let Value::Object(map) = &mut v {
        map.insert("state_version".into(), version.into());
    }
    Json(v)
}

async fn healthz(State(state): State<AppState>) -> Json<Value> {
    let handles: Vec<Arc<SessionHandle>> = state.sessions.read().await.values().cloned().collect();
    let mut version = 0;
    for h in &handles {
        version = version.max(h.session.lock().await.version());
    }
    Json(json!({ "status": "ok", "sessions": handles.len(), "state_version": version }))
}

#[derive(Deserialize)]
struct NextQuery {
    n: Option<usize>,
}

async fn next(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let session = handle.session.lock().await;
    let version = session.version();
    let items = session.next_batch(q.n.unwrap_or(20)).map_err(session_err(version))?;
    Ok(versioned(version, json!({ "items": items })))
}

#[derive(Deserialize)]
struct LabelRequest {
    sample_id: String,
    label: Label,
    annotator: Option<String>,
    #[serde(default)]
    overwrite: bool,
}

async fn labels(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<LabelRequest>,
) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let mut session = handle.session.lock().await;
    let outcome = session
        .submit_label(&req.sample_id, req.label, req.annotator, req.overwrite)
        .map_err(session_err(session.version()))?;
    Ok(versioned(session.version(), outcome))
}

async fn propagate(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let _running = handle.propagation.lock().await;
    let job = {
        let session = handle.session.lock().await;
        session.begin_propagation().map_err(session_err(session.version()))?
    };
    let started = job.started_at_version;
    let outcome = tokio::task::spawn_blocking(move || job.run())
        .await
        .map_err(|e| ApiError::Internal(format!("propagation task: {e}")))?
        .map_err(session_err(started))?;
    let mut session = handle.session.lock().await;
    let summary = session.apply_propagation(outcome).map_err(session_err(session.version()))?;
    Ok(versioned(session.version(), json!({ "summary": summary, "started_at_version": started })))
}

async fn stats(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let session = handle.session.lock().await;
    Ok(versioned(session.version(), session.stats()))
}

async fn close(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let mut session = handle.session.lock().await;
    session.close().map_err(session_err(session.version()))?;
    Ok(versioned(session.version(), json!({ "closed": true })))
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(&**token) {
            return Err(ApiError::Unauthorized);
        }
    }
    Ok(next.run(req).await)
}

pub fn router(state: AppState) -> Router {
    let sessions = Router::new()
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/propagate", post(propagate))
        .route("/sessions/{id}/stats", get(stats))
        .route("/sessions/{id}/close", post(close))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/healthz", get(healthz)).merge(sessions).with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
