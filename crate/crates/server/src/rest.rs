use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use taskguide_core::session::{
    header_path, read_log, replay_log, verify_replay, JsonlSink, SessionError, SessionEvent, SessionLog, SessionMode,
};

use crate::AppState;

pub(crate) struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSpec(_) => StatusCode::NOT_FOUND,
            SessionError::InvalidMode(_) | SessionError::InvalidSessionId(_) => StatusCode::BAD_REQUEST,
            SessionError::ReplayMismatch { .. } => StatusCode::CONFLICT,
            SessionError::Schema(_) | SessionError::SeqGap { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CreateSession {
    mode: String,
    spec_id: String,
    #[serde(default)]
    session_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub(crate) struct Created {
    session_id: String,
    mode: SessionMode,
    spec_id: String,
    window_ms: u64,
    cadence_ms: u64,
}

pub(crate) async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let mode: SessionMode = req.mode.parse()?;
    let session_id = req.session_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    if state.live(&session_id).is_some() || header_path(state.log_dir(), &session_id).exists() {
        return Err(ApiError(StatusCode::CONFLICT, format!("session {session_id} already exists")));
    }
    let sink = JsonlSink::new(state.log_dir());
    let session = state.engine().create_session(&session_id, mode, &req.spec_id, Box::new(sink))?;
    let created = Created {
        session_id: session_id.clone(),
        mode,
        spec_id: req.spec_id,
        window_ms: session.window_ms(),
        cadence_ms: session.header().config.cadence_ms,
    };
    state.insert(session);
    tracing::info!(%session_id, %mode, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Serialize)]
struct SpecSummary {
    spec_id: String,
    title: String,
    items: usize,
}

pub(crate) async fn list_specs(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let specs: Vec<SpecSummary> = state
        .engine()
        .library()
        .iter()
        .map(|s| SpecSummary { spec_id: s.spec_id().into(), title: s.title().into(), items: s.len() })
        .collect();
    Json(json!({ "specs": specs }))
}

pub(crate) async fn get_spec(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let spec = state.engine().library().get(&id).ok_or(SessionError::UnknownSpec(id))?;
    Ok(Json(spec.to_document()).into_response())
}

fn load(state: &AppState, id: &str) -> Result<SessionLog, ApiError> {
    if let Some(live) = state.live(id) {
        return Ok(live.lock().to_log());
    }
    if !header_path(state.log_dir(), id).exists() {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown session {id}")));
    }
    Ok(read_log(state.log_dir(), id)?)
}

pub(crate) async fn get_log(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionLog>, ApiError> {
    Ok(Json(load(&state, &id)?))
}

#[derive(Debug, Serialize)]
struct Replayed {
    inputs: usize,
    derived: usize,
    events: Vec<SessionEvent>,
}

/// Fails with 409 when the replay diverges from the recording.
pub(crate) async fn replay(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let log = load(&state, &id)?;
    let result = tokio::task::spawn_blocking(move || -> Result<Replayed, SessionError> {
        let report = verify_replay(&log)?;
        Ok(Replayed { inputs: report.inputs, derived: report.derived, events: replay_log(&log)? })
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(result).into_response())
}
