//! HTTP and WebSocket front for Wizard-of-Oz sessions.
//!
//! REST:
//!
//! | method | path                     |                                   |
//! |--------|--------------------------|-----------------------------------|
//! | POST   | `/sessions`              | `{mode, spec_id, session_id?}`    |
//! | GET    | `/specs`                 | spec summaries                    |
//! | GET    | `/specs/{id}`            | spec document                     |
//! | GET    | `/sessions/{id}/log`     | `{header, events}`                |
//! | POST   | `/sessions/{id}/replay`  | verify and return derived events  |
//!
//! The channel lives at `/ws`; see [`channel`].

pub mod channel;
mod rest;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::routing::{get, post};
use axum::Router;
use tokio::sync::broadcast;

use taskguide_core::model::{load_spec, SpecLibrary};
use taskguide_core::session::{Engine, Session, SessionError, SessionEvent};

/// Capacity of each session's live broadcast. Slow subscribers that fall
/// further behind catch up from the session log.
const BROADCAST_CAPACITY: usize = 1024;

/// One running session and its subscribers.
pub struct LiveSession {
    session: Mutex<Session>,
    events: broadcast::Sender<SessionEvent>,
    started: Instant,
}

impl LiveSession {
    fn new(session: Session) -> Self {
        LiveSession { session: Mutex::new(session), events: broadcast::channel(BROADCAST_CAPACITY).0, started: Instant::now() }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Runs `op` with the session clock and publishes what it emitted. The
    /// sink has synced every event before `op` returns, so nothing is
    /// broadcast before it is durable.
    fn apply<F>(&self, op: F) -> Result<Vec<SessionEvent>, SessionError>
    where
        F: FnOnce(&mut Session, u64) -> Result<Vec<SessionEvent>, SessionError>,
    {
        let mut session = self.lock();
        let elapsed = self.started.elapsed().as_millis() as u64;
        let now = session.events().last().map_or(elapsed, |e| e.t_ms.max(elapsed));
        let emitted = op(&mut session, now)?;
        for event in &emitted {
            let _ = self.events.send(event.clone());
        }
        Ok(emitted)
    }
}

pub struct AppState {
    engine: Engine,
    log_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<LiveSession>>>,
}

impl AppState {
    pub fn new(engine: Engine, log_dir: impl Into<PathBuf>) -> Self {
        AppState { engine, log_dir: log_dir.into(), sessions: RwLock::new(HashMap::new()) }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn log_dir(&self) -> &Path {
        &self.log_dir
    }

    pub fn live(&self, session_id: &str) -> Option<Arc<LiveSession>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(session_id).cloned()
    }

    fn insert(&self, session: Session) -> Arc<LiveSession> {
        let id = session.session_id().to_string();
        let live = Arc::new(LiveSession::new(session));
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id, live.clone());
        live
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(rest::create_session))
        .route("/specs", get(rest::list_specs))
        .route("/specs/{id}", get(rest::get_spec))
        .route("/sessions/{id}/log", get(rest::get_log))
        .route("/sessions/{id}/replay", post(rest::replay))
        .route("/ws", get(channel::upgrade))
        .with_state(state)
}

/// Loads every `*.json` spec in `dir`.
pub fn load_spec_dir(dir: &Path) -> anyhow::Result<SpecLibrary> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|ext| ext == "json"));
    paths.sort();
    let mut library = SpecLibrary::new();
    for path in paths {
        let spec = load_spec(&std::fs::read(&path)?).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        library.insert(spec)?;
    }
    Ok(library)
}
