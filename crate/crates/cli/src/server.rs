//! JSON-over-HTTP session service.

use crate::session::{PreferenceBody, SessionError, SessionState, SessionSummary, Store};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bope_core::bope_loop::RunConfig;
use serde::de::DeserializeOwned;
use serde_json::json;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

struct Slot {
    /// Serialises every mutation of the session.
    state: tokio::sync::Mutex<SessionState>,
    /// Readable while a step is running.
    summary: RwLock<SessionSummary>,
}

#[derive(Clone)]
pub struct AppState {
    store: Store,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
}

impl AppState {
    /// Loads every persisted session from the store.
    pub fn new(store: Store) -> std::io::Result<Self> {
        let mut map = HashMap::new();
        for mut s in store.load_all()? {
            s.recover();
            map.insert(
                s.id.clone(),
                Arc::new(Slot {
                    summary: RwLock::new(s.summary()),
                    state: tokio::sync::Mutex::new(s),
                }),
            );
        }
        Ok(AppState {
            store,
            sessions: Arc::new(RwLock::new(map)),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session '{id}'")))
    }

    fn persist(&self, slot: &Slot, s: &SessionState) -> Result<(), ApiError> {
        *slot.summary.write().expect("summary lock") = s.summary();
        self.store.save(s).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Conflict(_) => StatusCode::CONFLICT,
            SessionError::Invalid(_) => StatusCode::BAD_REQUEST,
            SessionError::Core(bope_core::Error::Config(_) | bope_core::Error::Input(_)) => StatusCode::BAD_REQUEST,
            SessionError::Core(bope_core::Error::State(_)) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/preference", post(preference))
        .route("/sessions/{id}/trace", get(trace))
        .with_state(state)
}

async fn create(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg: RunConfig = parse_body(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = tokio::task::spawn_blocking(move || SessionState::create(id, cfg))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = session.id.clone();
    let slot = Arc::new(Slot {
        summary: RwLock::new(session.summary()),
        state: tokio::sync::Mutex::new(session),
    });
    {
        let s = slot.state.lock().await;
        app.persist(&slot, &s)?;
    }
    app.sessions.write().expect("session map lock").insert(id.clone(), slot);
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn summary(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let slot = app.slot(&id)?;
    let s = slot.summary.read().expect("summary lock").clone();
    Ok(Json(s))
}

async fn step(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let mut guard = slot.state.lock().await;
    guard.begin_step()?;
    app.persist(&slot, &guard)?;
    let mut working = guard.clone();
    let (working, result) = tokio::task::spawn_blocking(move || {
        let r = working.step();
        (working, r)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    *guard = working;
    app.persist(&slot, &guard)?;
    Ok(Json(result?).into_response())
}

async fn preference(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let body: PreferenceBody = parse_body(&body)?;
    let mut guard = slot.state.lock().await;
    let mut working = guard.clone();
    let (working, result) = tokio::task::spawn_blocking(move || {
        let r = working.answer(body.choice);
        (working, r)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let progress = result?;
    *guard = working;
    app.persist(&slot, &guard)?;
    Ok(Json(progress).into_response())
}

async fn trace(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let s = slot.state.lock().await;
    Ok(Json(s.trace()).into_response())
}
