//! Wizard-of-Oz sessions.
//!
//! A [`Session`] owns the retrieval state, the optional online segmenter and
//! the accumulated frame for one task demonstration. Inputs (narration,
//! frame embeddings, wizard acts) are appended to the log first; the events
//! they cause are appended right after, in order, before anything is
//! returned to the caller. Given the header and the inputs, the derived
//! events are fully determined, which is what [`replay_log`] checks.

mod config;
mod store;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{AutoPrompt, AutoTrigger, SessionConfig, SessionMode, Utterance, UtteranceCatalog};
pub use store::{
    header_path, log_path, parse_log, read_log, replay_log, verify_replay, EventSink, JsonlSink, NullSink,
    ReplayReport, SessionLog,
};

use crate::encoder::FallbackEncoder;
use crate::frames::{FrameExtractor, RuleTagger};
use crate::matcher::{item_vectors, Estimate, MatchError, MatchState};
use crate::model::{frame_missing_slots, SemanticFrame, SlotName, Spec, SpecDocument, SpecLibrary, TranscriptChunk};
use crate::questions::{GeneratedQuestion, TemplateCatalog};
use crate::segmenter::{decode_checkpoint, encode_checkpoint, CausalTcnModel, OnlineSegmenter, SegmenterError};

pub const SESSION_FORMAT: &str = "tgsession1";
pub const MANUAL_PROVENANCE: &str = "manual";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown spec: {0}")]
    UnknownSpec(String),
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("invalid session id: {0:?}")]
    InvalidSessionId(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown utterance id: {0}")]
    UnknownUtterance(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("no suggested question at seq {0}")]
    UnknownSuggestion(u64),
    #[error("spec item {0} out of range")]
    ItemOutOfRange(usize),
    #[error("empty text")]
    EmptyText,
    #[error("timestamp {t_ms} ms is before the last event at {last_ms} ms")]
    StaleTimestamp { t_ms: u64, last_ms: u64 },
    #[error("role {0} is already connected")]
    RoleOccupied(Role),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error("frame extraction: {0}")]
    Frames(#[from] crate::frames::FrameError),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("seq gap: expected {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("replay diverged at seq {seq}: recorded {recorded}, replayed {replayed}")]
    ReplayMismatch { seq: u64, recorded: String, replayed: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Wizard,
    Performer,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Wizard,
    Performer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Wizard => "wizard",
            Role::Performer => "performer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoCommand {
    Play,
    Pause,
    Rewind,
    Forward,
    Loop,
    Zoom,
}

impl VideoCommand {
    pub const ALL: [VideoCommand; 6] = [
        VideoCommand::Play,
        VideoCommand::Pause,
        VideoCommand::Rewind,
        VideoCommand::Forward,
        VideoCommand::Loop,
        VideoCommand::Zoom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VideoCommand::Play => "play",
            VideoCommand::Pause => "pause",
            VideoCommand::Rewind => "rewind",
            VideoCommand::Forward => "forward",
            VideoCommand::Loop => "loop",
            VideoCommand::Zoom => "zoom",
        }
    }
}

impl FromStr for VideoCommand {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VideoCommand::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| SessionError::InvalidCommand(s.into()))
    }
}

/// Why the performer hears something.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TtsCause {
    /// The wizard event at `seq`.
    Wizard { seq: u64 },
    /// A configured auto-prompt fired by the event at `seq`.
    AutoPrompt { utterance_id: String, trigger: AutoTrigger, seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum EventBody {
    NarrationChunk(TranscriptChunk),
    FrameEmbedding {
        vector: Vec<f32>,
    },
    WizardUtterance {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        utterance_id: Option<String>,
        text: String,
    },
    QuestionSuggested(GeneratedQuestion),
    QuestionAsked {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slot: Option<SlotName>,
        /// Template id, or `manual`.
        provenance: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        suggestion_seq: Option<u64>,
        #[serde(default)]
        edited: bool,
    },
    VideoControl {
        cmd: VideoCommand,
    },
    SpecEstimate(Estimate),
    ActionEstimate {
        label: usize,
        probabilities: Vec<f64>,
    },
    FrameUpdate {
        frame: SemanticFrame,
        missing: Vec<SlotName>,
    },
    TtsRequest {
        text: String,
        cause: TtsCause,
    },
    Note {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confirm_item: Option<usize>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::NarrationChunk(_) => "narration-chunk",
            EventBody::FrameEmbedding { .. } => "frame-embedding",
            EventBody::WizardUtterance { .. } => "wizard-utterance",
            EventBody::QuestionSuggested(_) => "question-suggested",
            EventBody::QuestionAsked { .. } => "question-asked",
            EventBody::VideoControl { .. } => "video-control",
            EventBody::SpecEstimate(_) => "spec-estimate",
            EventBody::ActionEstimate { .. } => "action-estimate",
            EventBody::FrameUpdate { .. } => "frame-update",
            EventBody::TtsRequest { .. } => "tts-request",
            EventBody::Note { .. } => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_ms: u64,
    pub actor: Actor,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }

    pub fn is_derived(&self) -> bool {
        self.actor == Actor::System
    }
}

/// Whether `role` receives `event` on its channel. The wizard sees
/// everything; the performer sees what is said and shown to them, plus
/// estimates in guidance mode.
pub fn visible_to(role: Role, mode: SessionMode, event: &SessionEvent) -> bool {
    if role == Role::Wizard {
        return true;
    }
    match event.body {
        EventBody::TtsRequest { .. }
        | EventBody::VideoControl { .. }
        | EventBody::NarrationChunk(_)
        | EventBody::WizardUtterance { .. }
        | EventBody::QuestionAsked { .. } => true,
        EventBody::SpecEstimate(_) | EventBody::ActionEstimate { .. } => mode == SessionMode::Guidance,
        _ => false,
    }
}

/// What the wizard can do. JSON: `{"type": "select-utterance", ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum WizardAct {
    SelectUtterance {
        id: String,
    },
    AskQuestion {
        text: String,
        #[serde(default)]
        slot: Option<SlotName>,
        /// Template id of the suggestion this came from; `None` for manual
        /// questions.
        #[serde(default)]
        template_id: Option<String>,
    },
    EditQuestion {
        suggestion_seq: u64,
        text: String,
    },
    VideoControl {
        cmd: String,
    },
    FreeText {
        text: String,
    },
    /// Marks the start of a spec item and clears the frame accumulator.
    ConfirmItem {
        item: usize,
    },
    Note {
        text: String,
    },
}

/// Everything needed to rebuild a session's derived behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: String,
    pub session_id: String,
    pub mode: SessionMode,
    pub spec: SpecDocument,
    pub config: SessionConfig,
    pub utterances: Vec<Utterance>,
    pub templates: TemplateCatalog,
    pub item_vectors: Vec<Vec<f32>>,
    /// Base64 segmenter checkpoint, when one is attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmenter: Option<String>,
    pub tagger: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participants {
    pub wizard: bool,
    pub performer: bool,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Shared resources for creating sessions.
#[derive(Debug, Clone)]
pub struct Engine {
    library: SpecLibrary,
    config: SessionConfig,
    utterances: UtteranceCatalog,
    templates: TemplateCatalog,
    segmenter: Option<Arc<CausalTcnModel>>,
}

impl Engine {
    pub fn new(library: SpecLibrary, config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let (utterances, templates) = config.load_catalogs()?;
        Ok(Engine { library, config, utterances, templates, segmenter: None })
    }

    pub fn with_catalogs(mut self, utterances: UtteranceCatalog, templates: TemplateCatalog) -> Self {
        self.utterances = utterances;
        self.templates = templates;
        self
    }

    /// Attaches an action segmenter to sessions created from now on.
    pub fn with_segmenter(mut self, model: Arc<CausalTcnModel>) -> Self {
        self.segmenter = Some(model);
        self
    }

    pub fn library(&self) -> &SpecLibrary {
        &self.library
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn header_for(&self, session_id: &str, mode: SessionMode, spec_id: &str) -> Result<SessionHeader, SessionError> {
        if !valid_session_id(session_id) {
            return Err(SessionError::InvalidSessionId(session_id.to_string()));
        }
        let spec = self.library.get(spec_id).ok_or_else(|| SessionError::UnknownSpec(spec_id.to_string()))?;
        let encoder = FallbackEncoder::new(self.config.encoder_dim).map_err(|e| SessionError::Config(e.to_string()))?;
        Ok(SessionHeader {
            format: SESSION_FORMAT.into(),
            session_id: session_id.to_string(),
            mode,
            spec: spec.to_document(),
            config: self.config.clone(),
            utterances: self.utterances.for_mode(mode).to_vec(),
            templates: self.templates.clone(),
            item_vectors: item_vectors(&spec, &encoder),
            segmenter: self.segmenter.as_ref().map(|m| base64::engine::general_purpose::STANDARD.encode(encode_checkpoint(m))),
            tagger: "rule".into(),
        })
    }

    pub fn create_session(
        &self,
        session_id: &str,
        mode: SessionMode,
        spec_id: &str,
        sink: Box<dyn EventSink>,
    ) -> Result<Session, SessionError> {
        Session::from_header(self.header_for(session_id, mode, spec_id)?, sink)
    }
}

pub struct Session {
    header: SessionHeader,
    spec: Arc<Spec>,
    required: crate::model::SlotSet,
    match_state: MatchState,
    segmenter: Option<OnlineSegmenter>,
    extractor: FrameExtractor,
    frame: SemanticFrame,
    last_emitted: Option<(usize, u64)>,
    events: Vec<SessionEvent>,
    sink: Box<dyn EventSink>,
    participants: Participants,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.header.session_id)
            .field("mode", &self.header.mode)
            .field("events", &self.events.len())
            .finish()
    }
}

impl Session {
    /// Builds a fresh session and hands the header to `sink`.
    pub fn from_header(header: SessionHeader, mut sink: Box<dyn EventSink>) -> Result<Self, SessionError> {
        if header.format != SESSION_FORMAT {
            return Err(SessionError::Schema(format!("unknown session format {:?}", header.format)));
        }
        if header.tagger != "rule" {
            return Err(SessionError::Schema(format!("unknown tagger {:?}", header.tagger)));
        }
        if !valid_session_id(&header.session_id) {
            return Err(SessionError::InvalidSessionId(header.session_id.clone()));
        }
        header.config.validate()?;
        for prompt in header.config.auto_prompts.iter().filter(|p| p.mode == header.mode) {
            if !header.utterances.iter().any(|u| u.id == prompt.utterance) {
                return Err(SessionError::UnknownUtterance(prompt.utterance.clone()));
            }
        }
        let spec = Arc::new(Spec::try_from(header.spec.clone()).map_err(|e| SessionError::Schema(e.to_string()))?);
        let match_state = MatchState::new(spec.clone(), header.item_vectors.clone(), header.config.window_ms)?;
        let segmenter = match &header.segmenter {
            Some(encoded) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(encoded)
                    .map_err(|e| SessionError::Schema(format!("segmenter: {e}")))?;
                let model = decode_checkpoint(&bytes)?;
                if model.config().input_dim != match_state.dim() {
                    return Err(SessionError::Config(format!(
                        "segmenter expects {}-d features, stream is {}-d",
                        model.config().input_dim,
                        match_state.dim()
                    )));
                }
                Some(OnlineSegmenter::new(Arc::new(model)))
            }
            None => None,
        };
        sink.begin(&header)?;
        Ok(Session {
            required: header.config.required(),
            header,
            spec,
            match_state,
            segmenter,
            extractor: FrameExtractor::with_default_mapping(),
            frame: SemanticFrame::new(),
            last_emitted: None,
            events: Vec::new(),
            sink,
            participants: Participants::default(),
        })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn session_id(&self) -> &str {
        &self.header.session_id
    }

    pub fn mode(&self) -> SessionMode {
        self.header.mode
    }

    pub fn spec(&self) -> &Arc<Spec> {
        &self.spec
    }

    pub fn window_ms(&self) -> u64 {
        self.match_state.window_ms()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Events with `seq > after`.
    pub fn events_after(&self, after: Option<u64>) -> &[SessionEvent] {
        match after {
            Some(seq) => &self.events[(seq as usize + 1).min(self.events.len())..],
            None => &self.events,
        }
    }

    pub fn current_frame(&self) -> &SemanticFrame {
        &self.frame
    }

    pub fn participants(&self) -> Participants {
        self.participants
    }

    pub fn connect(&mut self, role: Role) -> Result<(), SessionError> {
        let slot = match role {
            Role::Wizard => &mut self.participants.wizard,
            Role::Performer => &mut self.participants.performer,
        };
        if *slot {
            return Err(SessionError::RoleOccupied(role));
        }
        *slot = true;
        Ok(())
    }

    pub fn disconnect(&mut self, role: Role) {
        match role {
            Role::Wizard => self.participants.wizard = false,
            Role::Performer => self.participants.performer = false,
        }
    }

    pub fn to_log(&self) -> SessionLog {
        SessionLog { header: self.header.clone(), events: self.events.clone() }
    }

    fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t_ms)
    }

    fn check_time(&self, t_ms: u64) -> Result<(), SessionError> {
        match self.last_t() {
            Some(last_ms) if t_ms < last_ms => Err(SessionError::StaleTimestamp { t_ms, last_ms }),
            _ => Ok(()),
        }
    }

    fn append(&mut self, t_ms: u64, actor: Actor, body: EventBody, out: &mut Vec<SessionEvent>) -> Result<u64, SessionError> {
        let seq = self.events.len() as u64;
        let event = SessionEvent { seq, t_ms, actor, body };
        self.sink.append(&event)?;
        self.events.push(event.clone());
        out.push(event);
        Ok(seq)
    }

    fn auto_prompts(&self, trigger: AutoTrigger) -> Vec<Utterance> {
        self.header
            .config
            .auto_prompts
            .iter()
            .filter(|p| p.mode == self.header.mode && p.on == trigger)
            .filter_map(|p| self.header.utterances.iter().find(|u| u.id == p.utterance).cloned())
            .collect()
    }

    fn fill_item(&self, text: &str, item: Option<usize>) -> String {
        let item_text = item.and_then(|i| self.spec.item(i)).map_or("", |it| it.text.as_str());
        text.replace("{item}", item_text)
    }

    fn fire(
        &mut self,
        t_ms: u64,
        trigger: AutoTrigger,
        cause_seq: u64,
        item: Option<usize>,
        out: &mut Vec<SessionEvent>,
    ) -> Result<(), SessionError> {
        for utterance in self.auto_prompts(trigger) {
            let body = EventBody::TtsRequest {
                text: self.fill_item(&utterance.text, item),
                cause: TtsCause::AutoPrompt { utterance_id: utterance.id, trigger, seq: cause_seq },
            };
            self.append(t_ms, Actor::System, body, out)?;
        }
        Ok(())
    }

    fn emit_frame(&mut self, t_ms: u64, out: &mut Vec<SessionEvent>) -> Result<(), SessionError> {
        let missing: Vec<SlotName> = frame_missing_slots(&self.frame, &self.required).into_iter().collect();
        let body = EventBody::FrameUpdate { frame: self.frame.clone(), missing };
        self.append(t_ms, Actor::System, body, out)?;
        let suggestions = self.header.templates.suggest(&self.frame, &self.required, self.header.config.suggestion_limit);
        for question in suggestions {
            self.append(t_ms, Actor::System, EventBody::QuestionSuggested(question), out)?;
        }
        Ok(())
    }

    pub fn ingest_narration(&mut self, t_ms: u64, chunk: TranscriptChunk) -> Result<Vec<SessionEvent>, SessionError> {
        self.check_time(t_ms)?;
        let extraction = if chunk.text.trim().is_empty() {
            None
        } else {
            Some(self.extractor.extract_text(&RuleTagger, &chunk.text)?)
        };
        let mut out = Vec::new();
        let seq = self.append(t_ms, Actor::Performer, EventBody::NarrationChunk(chunk), &mut out)?;
        if let Some(extraction) = extraction {
            if self.frame.merge_union(&extraction.frame) {
                self.emit_frame(t_ms, &mut out)?;
            }
            if extraction.no_action {
                let item = self.last_emitted.map(|(item, _)| item);
                self.fire(t_ms, AutoTrigger::NoAction, seq, item, &mut out)?;
            }
        }
        Ok(out)
    }

    pub fn ingest_frame_embedding(&mut self, t_ms: u64, vector: Vec<f32>) -> Result<Vec<SessionEvent>, SessionError> {
        self.check_time(t_ms)?;
        if let Some(bad) = vector.iter().position(|x| !x.is_finite()) {
            return Err(SessionError::Schema(format!("non-finite value at index {bad}")));
        }
        let estimate = self.match_state.observe_frame(t_ms, &vector)?.clone();
        let prediction = match &mut self.segmenter {
            Some(seg) => Some(seg.predict_online(&vector)?),
            None => None,
        };
        let mut out = Vec::new();
        let seq = self.append(t_ms, Actor::Performer, EventBody::FrameEmbedding { vector }, &mut out)?;
        let changed = self.last_emitted.is_none_or(|(item, _)| item != estimate.item);
        let due = self.last_emitted.is_none_or(|(_, t0)| t_ms - t0 >= self.header.config.cadence_ms);
        if changed || due {
            let item = estimate.item;
            self.last_emitted = Some((item, t_ms));
            self.append(t_ms, Actor::System, EventBody::SpecEstimate(estimate), &mut out)?;
            if changed {
                self.fire(t_ms, AutoTrigger::ItemChange, seq, Some(item), &mut out)?;
            }
        }
        if let Some(p) = prediction {
            let body = EventBody::ActionEstimate { label: p.label, probabilities: p.probabilities };
            self.append(t_ms, Actor::System, body, &mut out)?;
        }
        Ok(out)
    }

    pub fn wizard_act(&mut self, t_ms: u64, act: WizardAct) -> Result<Vec<SessionEvent>, SessionError> {
        self.check_time(t_ms)?;
        let mut out = Vec::new();
        let spoken = match act {
            WizardAct::SelectUtterance { id } => {
                let utterance = self
                    .header
                    .utterances
                    .iter()
                    .find(|u| u.id == id)
                    .ok_or_else(|| SessionError::UnknownUtterance(id.clone()))?;
                let text = self.fill_item(&utterance.text, self.last_emitted.map(|(i, _)| i));
                let body = EventBody::WizardUtterance { utterance_id: Some(id), text: text.clone() };
                Some((self.append(t_ms, Actor::Wizard, body, &mut out)?, text))
            }
            WizardAct::FreeText { text } => {
                if text.trim().is_empty() {
                    return Err(SessionError::EmptyText);
                }
                let body = EventBody::WizardUtterance { utterance_id: None, text: text.clone() };
                Some((self.append(t_ms, Actor::Wizard, body, &mut out)?, text))
            }
            WizardAct::AskQuestion { text, slot, template_id } => {
                if text.trim().is_empty() {
                    return Err(SessionError::EmptyText);
                }
                let provenance = template_id.unwrap_or_else(|| MANUAL_PROVENANCE.to_string());
                let body = EventBody::QuestionAsked { text: text.clone(), slot, provenance, suggestion_seq: None, edited: false };
                Some((self.append(t_ms, Actor::Wizard, body, &mut out)?, text))
            }
            WizardAct::EditQuestion { suggestion_seq, text } => {
                if text.trim().is_empty() {
                    return Err(SessionError::EmptyText);
                }
                let suggestion = match self.events.get(suggestion_seq as usize).map(|e| &e.body) {
                    Some(EventBody::QuestionSuggested(q)) => q.clone(),
                    _ => return Err(SessionError::UnknownSuggestion(suggestion_seq)),
                };
                let body = EventBody::QuestionAsked {
                    edited: text != suggestion.text,
                    text: text.clone(),
                    slot: Some(suggestion.target_slot),
                    provenance: suggestion.template_id,
                    suggestion_seq: Some(suggestion_seq),
                };
                Some((self.append(t_ms, Actor::Wizard, body, &mut out)?, text))
            }
            WizardAct::VideoControl { cmd } => {
                let cmd: VideoCommand = cmd.parse()?;
                self.append(t_ms, Actor::Wizard, EventBody::VideoControl { cmd }, &mut out)?;
                None
            }
            WizardAct::ConfirmItem { item } => {
                if item >= self.spec.len() {
                    return Err(SessionError::ItemOutOfRange(item));
                }
                let body = EventBody::Note { text: format!("confirmed item {item}"), confirm_item: Some(item) };
                self.append(t_ms, Actor::Wizard, body, &mut out)?;
                self.frame = SemanticFrame::new();
                self.emit_frame(t_ms, &mut out)?;
                None
            }
            WizardAct::Note { text } => {
                self.append(t_ms, Actor::Wizard, EventBody::Note { text, confirm_item: None }, &mut out)?;
                None
            }
        };
        if let Some((seq, text)) = spoken {
            self.append(t_ms, Actor::System, EventBody::TtsRequest { text, cause: TtsCause::Wizard { seq } }, &mut out)?;
        }
        Ok(out)
    }

    /// Re-applies a recorded input event.
    pub fn apply_input(&mut self, event: &SessionEvent) -> Result<Vec<SessionEvent>, SessionError> {
        match (&event.actor, &event.body) {
            (Actor::Performer, EventBody::NarrationChunk(chunk)) => self.ingest_narration(event.t_ms, chunk.clone()),
            (Actor::Performer, EventBody::FrameEmbedding { vector }) => self.ingest_frame_embedding(event.t_ms, vector.clone()),
            (Actor::Wizard, body) => self.wizard_act(event.t_ms, input_act(body)?),
            _ => Err(SessionError::Schema(format!(
                "event {} ({}) by {:?} is not an input",
                event.seq,
                event.body.kind(),
                event.actor
            ))),
        }
    }
}

/// The wizard act that produced a recorded wizard event.
pub fn input_act(body: &EventBody) -> Result<WizardAct, SessionError> {
    Ok(match body.clone() {
        EventBody::WizardUtterance { utterance_id: Some(id), .. } => WizardAct::SelectUtterance { id },
        EventBody::WizardUtterance { utterance_id: None, text } => WizardAct::FreeText { text },
        EventBody::QuestionAsked { text, suggestion_seq: Some(suggestion_seq), .. } => {
            WizardAct::EditQuestion { suggestion_seq, text }
        }
        EventBody::QuestionAsked { text, slot, provenance, suggestion_seq: None, .. } => WizardAct::AskQuestion {
            text,
            slot,
            template_id: (provenance != MANUAL_PROVENANCE).then_some(provenance),
        },
        EventBody::VideoControl { cmd } => WizardAct::VideoControl { cmd: cmd.as_str().into() },
        EventBody::Note { confirm_item: Some(item), .. } => WizardAct::ConfirmItem { item },
        EventBody::Note { text, confirm_item: None } => WizardAct::Note { text },
        other => return Err(SessionError::Schema(format!("{} is not a wizard input", other.kind()))),
    })
}
