//! The participant channel at `/ws`.
//!
//! The client opens with a handshake:
//!
//! ```json
//! {"session_id": "...", "role": "wizard", "resume_from_seq": 41}
//! ```
//!
//! The server answers `{"type": "subscribed", ...}`, sends every event after
//! `resume_from_seq` that the role may see, then the live tail. Events go
//! out as their log lines (objects with `seq` and `kind`); anything else the
//! server sends has a `type`.
//!
//! Inputs:
//!
//! - performer: `{"type": "narration", "text", "start_ms"?, "end_ms"?}` and
//!   `{"type": "frame-embedding", "vector", "t_ms"?}`
//! - wizard: `{"type": "wizard-act", "act": {...}}`

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use taskguide_core::model::TranscriptChunk;
use taskguide_core::session::{visible_to, EventBody, Role, SessionError, SessionEvent, SessionMode, WizardAct};

use crate::{AppState, LiveSession};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Handshake {
    pub session_id: String,
    pub role: Role,
    /// Last seq the client already has.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume_from_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    Narration {
        text: String,
        #[serde(default)]
        start_ms: Option<u64>,
        #[serde(default)]
        end_ms: Option<u64>,
    },
    FrameEmbedding {
        vector: Vec<f32>,
        /// Media time of the frame; defaults to the session clock.
        #[serde(default)]
        t_ms: Option<u64>,
    },
    WizardAct {
        act: WizardAct,
    },
}

impl ClientMessage {
    fn allowed_for(&self) -> Role {
        match self {
            ClientMessage::WizardAct { .. } => Role::Wizard,
            _ => Role::Performer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    Subscribed { session_id: String, role: Role, mode: SessionMode, next_seq: u64 },
    Error { code: String, message: String },
}

impl ServerMessage {
    fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.into(), message: message.into() }
    }
}

pub(crate) async fn upgrade(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| serve(state, socket))
}

async fn send_json(socket: &mut WebSocket, text: String) -> bool {
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn send_msg(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    send_json(socket, serde_json::to_string(msg).expect("server message serializes")).await
}

async fn reject(mut socket: WebSocket, code: &str, message: impl Into<String>) {
    let _ = send_msg(&mut socket, &ServerMessage::error(code, message)).await;
    let _ = socket.send(Message::Close(None)).await;
}

async fn read_handshake(socket: &mut WebSocket) -> Result<Handshake, String> {
    loop {
        match tokio::time::timeout(HANDSHAKE_TIMEOUT, socket.recv()).await {
            Err(_) => return Err("no handshake".into()),
            Ok(None) | Ok(Some(Err(_))) => return Err("closed".into()),
            Ok(Some(Ok(Message::Text(text)))) => return serde_json::from_str(&text).map_err(|e| e.to_string()),
            Ok(Some(Ok(Message::Close(_)))) => return Err("closed".into()),
            Ok(Some(Ok(_))) => continue,
        }
    }
}

async fn serve(state: Arc<AppState>, mut socket: WebSocket) {
    let handshake = match read_handshake(&mut socket).await {
        Ok(h) => h,
        Err(e) => return reject(socket, "bad-handshake", e).await,
    };
    let Some(live) = state.live(&handshake.session_id) else {
        return reject(socket, "unknown-session", format!("unknown session {}", handshake.session_id)).await;
    };
    let role = handshake.role;

    // Snapshot and subscribe under the session lock so that the backlog and
    // the live tail neither overlap nor leave a gap.
    let joined = {
        let mut session = live.lock();
        session.connect(role).map(|()| {
            let backlog = session.events_after(handshake.resume_from_seq).to_vec();
            (session.mode(), backlog, session.events().len() as u64, live.events.subscribe())
        })
    };
    let (mode, backlog, next_seq, mut rx) = match joined {
        Ok(joined) => joined,
        Err(e) => return reject(socket, "role-occupied", e.to_string()).await,
    };
    tracing::info!(session_id = %handshake.session_id, %role, "connected");

    let subscribed = ServerMessage::Subscribed { session_id: handshake.session_id.clone(), role, mode, next_seq };
    let mut last_seen = handshake.resume_from_seq;
    let mut open = send_msg(&mut socket, &subscribed).await;
    for event in backlog {
        if !open {
            break;
        }
        open = forward(&mut socket, role, mode, &event, &mut last_seen).await;
    }

    while open {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(event) => open = forward(&mut socket, role, mode, &event, &mut last_seen).await,
                Err(RecvError::Lagged(_)) => {
                    let missed = live.lock().events_after(last_seen).to_vec();
                    for event in missed {
                        open = open && forward(&mut socket, role, mode, &event, &mut last_seen).await;
                    }
                }
                Err(RecvError::Closed) => open = false,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if let Err(msg) = handle_input(&live, role, &text).await {
                        open = send_msg(&mut socket, &msg).await;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => open = false,
                Some(Ok(_)) => {}
            },
        }
    }

    live.lock().disconnect(role);
    tracing::info!(session_id = %handshake.session_id, %role, "disconnected");
}

/// Sends `event` unless it was already sent or `role` may not see it.
async fn forward(
    socket: &mut WebSocket,
    role: Role,
    mode: SessionMode,
    event: &SessionEvent,
    last_seen: &mut Option<u64>,
) -> bool {
    if last_seen.is_some_and(|s| event.seq <= s) {
        return true;
    }
    *last_seen = Some(event.seq);
    if !visible_to(role, mode, event) {
        return true;
    }
    send_json(socket, event.to_json()).await
}

async fn handle_input(live: &Arc<LiveSession>, role: Role, text: &str) -> Result<(), ServerMessage> {
    let message: ClientMessage =
        serde_json::from_str(text).map_err(|e| ServerMessage::error("bad-message", e.to_string()))?;
    if message.allowed_for() != role {
        return Err(ServerMessage::error("forbidden", format!("{role} may not send this message")));
    }
    let live = live.clone();
    tokio::task::spawn_blocking(move || live.apply(|session, now| dispatch(session, now, message)))
        .await
        .map_err(|e| ServerMessage::error("internal", e.to_string()))?
        .map(|_| ())
        .map_err(|e| ServerMessage::error(error_code(&e), e.to_string()))
}

fn dispatch(
    session: &mut taskguide_core::session::Session,
    now: u64,
    message: ClientMessage,
) -> Result<Vec<SessionEvent>, SessionError> {
    match message {
        ClientMessage::Narration { text, start_ms, end_ms } => {
            let index = session.events().iter().filter(|e| matches!(e.body, EventBody::NarrationChunk(_))).count();
            let start = start_ms.unwrap_or(now);
            let chunk = TranscriptChunk::new(index as u64, text, start, end_ms.unwrap_or(start.max(now)))
                .map_err(|e| SessionError::Schema(e.to_string()))?;
            session.ingest_narration(now, chunk)
        }
        ClientMessage::FrameEmbedding { vector, t_ms } => {
            // Frames need strictly increasing times; two may land in the same
            // clock millisecond.
            let t = t_ms.unwrap_or_else(|| {
                let last_frame = session.events().iter().rev().find(|e| matches!(e.body, EventBody::FrameEmbedding { .. }));
                last_frame.map_or(now, |e| now.max(e.t_ms + 1))
            });
            session.ingest_frame_embedding(t, vector)
        }
        ClientMessage::WizardAct { act } => session.wizard_act(now, act),
    }
}

fn error_code(e: &SessionError) -> &'static str {
    match e {
        SessionError::UnknownUtterance(_) => "unknown-utterance",
        SessionError::InvalidCommand(_) => "invalid-command",
        SessionError::StaleTimestamp { .. } => "stale-timestamp",
        SessionError::Match(_) => "match",
        SessionError::EmptyText => "empty-text",
        SessionError::UnknownSuggestion(_) => "unknown-suggestion",
        SessionError::ItemOutOfRange(_) => "item-out-of-range",
        SessionError::Io(_) => "io",
        _ => "rejected",
    }
}
