use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::matcher::DEFAULT_WINDOW_MS;
use crate::model::{SlotName, SlotSet};
use crate::questions::TemplateCatalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionMode {
    PostHoc,
    During,
    Guidance,
}

impl SessionMode {
    pub const ALL: [SessionMode; 3] = [SessionMode::PostHoc, SessionMode::During, SessionMode::Guidance];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionMode::PostHoc => "post-hoc",
            SessionMode::During => "during",
            SessionMode::Guidance => "guidance",
        }
    }
}

impl fmt::Display for SessionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionMode {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SessionMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| SessionError::InvalidMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoTrigger {
    /// The spec-item estimate moved to a different item (including the first
    /// estimate).
    ItemChange,
    /// A non-empty narration chunk contained no action.
    NoAction,
}

/// An utterance the system speaks on its own when `on` fires in `mode`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoPrompt {
    pub mode: SessionMode,
    pub on: AutoTrigger,
    pub utterance: String,
}

/// Session settings, read from TOML.
///
/// ```toml
/// window_ms = 6000
/// cadence_ms = 1000
/// required_slots = ["Action", "Tool", "Receiver"]
/// encoder_dim = 64
/// suggestion_limit = 3
/// utterance_catalog = "utterances.json"
/// template_catalog = "templates.json"
///
/// [[auto_prompts]]
/// mode = "guidance"
/// on = "item-change"
/// utterance = "guide-item"
/// ```
///
/// Relative catalog paths resolve against the config file's directory.
/// Without a catalog path the built-in catalog is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub window_ms: u64,
    pub cadence_ms: u64,
    pub required_slots: Vec<SlotName>,
    pub encoder_dim: usize,
    pub suggestion_limit: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utterance_catalog: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_catalog: Option<PathBuf>,
    pub auto_prompts: Vec<AutoPrompt>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            window_ms: DEFAULT_WINDOW_MS,
            cadence_ms: 1000,
            required_slots: vec![SlotName::Action, SlotName::Tool, SlotName::Receiver],
            encoder_dim: 64,
            suggestion_limit: 3,
            utterance_catalog: None,
            template_catalog: None,
            auto_prompts: vec![AutoPrompt {
                mode: SessionMode::Guidance,
                on: AutoTrigger::ItemChange,
                utterance: "guide-item".into(),
            }],
        }
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let config: SessionConfig = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let mut config = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.utterance_catalog, &mut config.template_catalog].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let fail = |m: &str| Err(SessionError::Config(m.to_string()));
        if self.window_ms == 0 {
            return fail("window_ms must be positive");
        }
        if self.cadence_ms == 0 {
            return fail("cadence_ms must be positive");
        }
        if self.encoder_dim < crate::encoder::MIN_FALLBACK_DIM {
            return fail("encoder_dim must be at least 8");
        }
        if self.suggestion_limit == 0 {
            return fail("suggestion_limit must be at least 1");
        }
        Ok(())
    }

    pub fn required(&self) -> SlotSet {
        self.required_slots.iter().copied().collect()
    }

    /// Catalogs named by the config, or the built-in ones.
    pub fn load_catalogs(&self) -> Result<(UtteranceCatalog, TemplateCatalog), SessionError> {
        let utterances = match &self.utterance_catalog {
            Some(path) => UtteranceCatalog::from_json(&std::fs::read(path)?)?,
            None => UtteranceCatalog::default(),
        };
        let templates = match &self.template_catalog {
            Some(path) => TemplateCatalog::load(path).map_err(|e| SessionError::Config(e.to_string()))?,
            None => TemplateCatalog::default(),
        };
        Ok((utterances, templates))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    /// May contain `{item}`, replaced by the current spec item text.
    pub text: String,
}

/// Pre-filled utterances per session mode. JSON: `{mode: [{id, text}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtteranceCatalog {
    pub modes: BTreeMap<SessionMode, Vec<Utterance>>,
}

const DEFAULT_UTTERANCES: [(SessionMode, &str, &str); 13] = [
    (SessionMode::PostHoc, "prompt-narrate", "Please describe what you are doing in this part of the video."),
    (SessionMode::PostHoc, "prompt-more", "Could you tell me more about this step?"),
    (SessionMode::PostHoc, "prompt-replay", "Let's watch that part again."),
    (SessionMode::PostHoc, "thanks", "Thank you, that was helpful."),
    (SessionMode::During, "prompt-narrate", "Please describe what you are doing as you go."),
    (SessionMode::During, "prompt-slow", "Could you slow down a little?"),
    (SessionMode::During, "prompt-repeat", "Sorry, could you repeat that?"),
    (SessionMode::During, "thanks", "Thank you, that was helpful."),
    (SessionMode::Guidance, "prompt-narrate", "Tell me what you are doing and I will follow along."),
    (SessionMode::Guidance, "guide-item", "Next step: {item}"),
    (SessionMode::Guidance, "guide-check", "Did that step work?"),
    (SessionMode::Guidance, "guide-done", "That was the last step. Well done!"),
    (SessionMode::Guidance, "thanks", "Thank you."),
];

impl Default for UtteranceCatalog {
    fn default() -> Self {
        let mut modes: BTreeMap<SessionMode, Vec<Utterance>> = BTreeMap::new();
        for (mode, id, text) in DEFAULT_UTTERANCES {
            modes.entry(mode).or_default().push(Utterance { id: id.into(), text: text.into() });
        }
        UtteranceCatalog { modes }
    }
}

impl UtteranceCatalog {
    pub fn from_json(bytes: &[u8]) -> Result<Self, SessionError> {
        let catalog: UtteranceCatalog =
            serde_json::from_slice(bytes).map_err(|e| SessionError::Config(format!("utterance catalog: {e}")))?;
        for (mode, list) in &catalog.modes {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = list.iter().find(|u| !seen.insert(u.id.as_str())) {
                return Err(SessionError::Config(format!("duplicate utterance id {} in {mode}", dup.id)));
            }
        }
        Ok(catalog)
    }

    pub fn for_mode(&self, mode: SessionMode) -> &[Utterance] {
        self.modes.get(&mode).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}
