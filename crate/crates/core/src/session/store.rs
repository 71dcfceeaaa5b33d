//! Session persistence: a header file plus one JSONL event file per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Session, SessionError, SessionEvent, SessionHeader};

pub trait EventSink: Send {
    fn begin(&mut self, _header: &SessionHeader) -> Result<(), SessionError> {
        Ok(())
    }

    /// Must not return before the event is durable.
    fn append(&mut self, event: &SessionEvent) -> Result<(), SessionError>;
}

/// Keeps nothing beyond the session's in-memory log.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _event: &SessionEvent) -> Result<(), SessionError> {
        Ok(())
    }
}

pub fn header_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.header.json"))
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

/// Writes `<id>.header.json` when the session starts and appends one line
/// per event to `<id>.jsonl`, syncing after each line.
#[derive(Debug)]
pub struct JsonlSink {
    dir: PathBuf,
    file: Option<File>,
}

impl JsonlSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        JsonlSink { dir: dir.into(), file: None }
    }
}

impl EventSink for JsonlSink {
    fn begin(&mut self, header: &SessionHeader) -> Result<(), SessionError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut h = File::create(header_path(&self.dir, &header.session_id))?;
        h.write_all(serde_json::to_string_pretty(header).expect("header serializes").as_bytes())?;
        h.write_all(b"\n")?;
        h.sync_all()?;
        let file = OpenOptions::new().create_new(true).append(true).open(log_path(&self.dir, &header.session_id))?;
        self.file = Some(file);
        Ok(())
    }

    fn append(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        let file = self.file.as_mut().ok_or_else(|| SessionError::Schema("sink used before begin".into()))?;
        let mut line = event.to_json();
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub events: Vec<SessionEvent>,
}

impl SessionLog {
    /// Header JSON and event JSONL.
    pub fn to_files(&self) -> (String, String) {
        let header = serde_json::to_string_pretty(&self.header).expect("header serializes");
        let events = self.events.iter().map(|e| e.to_json() + "\n").collect();
        (header, events)
    }
}

fn check_dense(events: &[SessionEvent]) -> Result<(), SessionError> {
    for (expected, event) in events.iter().enumerate() {
        if event.seq != expected as u64 {
            return Err(SessionError::SeqGap { expected: expected as u64, found: event.seq });
        }
        if expected > 0 && event.t_ms < events[expected - 1].t_ms {
            return Err(SessionError::Schema(format!("event {} goes back in time", event.seq)));
        }
    }
    Ok(())
}

pub fn parse_log(header: &str, jsonl: &str) -> Result<SessionLog, SessionError> {
    let header: SessionHeader =
        serde_json::from_str(header).map_err(|e| SessionError::Schema(format!("header: {e}")))?;
    let events = jsonl
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| SessionError::Schema(format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<SessionEvent>, _>>()?;
    check_dense(&events)?;
    Ok(SessionLog { header, events })
}

pub fn read_log(dir: &Path, session_id: &str) -> Result<SessionLog, SessionError> {
    let header = std::fs::read_to_string(header_path(dir, session_id))?;
    let mut jsonl = String::new();
    for line in BufReader::new(File::open(log_path(dir, session_id))?).lines() {
        jsonl.push_str(&line?);
        jsonl.push('\n');
    }
    parse_log(&header, &jsonl)
}

/// Re-drives the recorded inputs through a fresh session built from the
/// header and returns the full replayed event sequence.
fn replay_all(log: &SessionLog) -> Result<Vec<SessionEvent>, SessionError> {
    check_dense(&log.events)?;
    let mut session = Session::from_header(log.header.clone(), Box::new(super::NullSink))?;
    for event in log.events.iter().filter(|e| !e.is_derived()) {
        session.apply_input(event)?;
    }
    Ok(session.events().to_vec())
}

/// System-derived events produced by replaying `log`.
pub fn replay_log(log: &SessionLog) -> Result<Vec<SessionEvent>, SessionError> {
    Ok(replay_all(log)?.into_iter().filter(SessionEvent::is_derived).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub inputs: usize,
    pub derived: usize,
}

/// Replays `log` and requires every event, serialized, to be byte-identical
/// to the recording.
pub fn verify_replay(log: &SessionLog) -> Result<ReplayReport, SessionError> {
    let replayed = replay_all(log)?;
    for (i, recorded) in log.events.iter().enumerate() {
        let recorded_json = recorded.to_json();
        let replayed_json = replayed.get(i).map(SessionEvent::to_json).unwrap_or_else(|| "<missing>".into());
        if recorded_json != replayed_json {
            return Err(SessionError::ReplayMismatch { seq: i as u64, recorded: recorded_json, replayed: replayed_json });
        }
    }
    if let Some(extra) = replayed.get(log.events.len()) {
        return Err(SessionError::ReplayMismatch {
            seq: extra.seq,
            recorded: "<missing>".into(),
            replayed: extra.to_json(),
        });
    }
    let derived = replayed.iter().filter(|e| e.is_derived()).count();
    Ok(ReplayReport { inputs: replayed.len() - derived, derived })
}
