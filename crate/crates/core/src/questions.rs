//! Slot-targeted question templates.
//!
//! One template per slot, keyed `<Slot>-1`. Patterns may reference
//! `{action}` and `{receiver}`; multiple spans are joined with " and ".
//! When the frame has no Action, every non-Action prompt falls back to the
//! generic Action question, since the other templates read badly without a
//! verb.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{frame_missing_slots, SemanticFrame, SlotName, SlotSet};

#[derive(Debug, thiserror::Error)]
pub enum QuestionError {
    #[error("template catalog: {0}")]
    Catalog(String),
    #[error("slot {0} is already filled; mark the prompt as a confirmation to ask anyway")]
    SlotFilled(SlotName),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    pub pattern: String,
}

const DEFAULT_TEMPLATES: [(SlotName, &str); 10] = [
    (SlotName::Action, "What are you doing right now?"),
    (SlotName::Tool, "What are you using to {action} {receiver}?"),
    (SlotName::Receiver, "What do you {action}?"),
    (SlotName::Location, "Where do you {action} {receiver}?"),
    (SlotName::Temporal, "When do you {action} {receiver}?"),
    (SlotName::Direction, "In which direction do you {action} {receiver}?"),
    (SlotName::Manner, "How do you {action} {receiver}?"),
    (SlotName::Extent, "Until when do you {action} {receiver}?"),
    (SlotName::Purpose, "Why do you {action} {receiver}?"),
    (SlotName::Note, "Is there anything else to note about how you {action} {receiver}?"),
];

const PLACEHOLDERS: [&str; 2] = ["action", "receiver"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, QuestionTemplate>", into = "BTreeMap<String, QuestionTemplate>")]
pub struct TemplateCatalog {
    templates: BTreeMap<SlotName, QuestionTemplate>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        let templates = DEFAULT_TEMPLATES
            .iter()
            .map(|(slot, pattern)| {
                (*slot, QuestionTemplate { id: format!("{}-1", slot.as_str()), pattern: pattern.to_string() })
            })
            .collect();
        TemplateCatalog { templates }
    }
}

fn check_pattern(pattern: &str) -> Result<(), String> {
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let close = rest[open..].find('}').ok_or_else(|| format!("unclosed placeholder in {pattern:?}"))? + open;
        let name = &rest[open + 1..close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder {{{name}}} in {pattern:?}"));
        }
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(format!("stray '}}' in {pattern:?}"));
    }
    Ok(())
}

impl TryFrom<BTreeMap<String, QuestionTemplate>> for TemplateCatalog {
    type Error = QuestionError;

    fn try_from(raw: BTreeMap<String, QuestionTemplate>) -> Result<Self, Self::Error> {
        let mut templates = BTreeMap::new();
        let mut ids = std::collections::BTreeSet::new();
        for (key, template) in raw {
            let slot: SlotName = key.parse().map_err(|e: crate::model::UnknownSlot| QuestionError::Catalog(e.to_string()))?;
            check_pattern(&template.pattern).map_err(QuestionError::Catalog)?;
            if template.id.trim().is_empty() {
                return Err(QuestionError::Catalog(format!("empty template id for {slot}")));
            }
            if !ids.insert(template.id.clone()) {
                return Err(QuestionError::Catalog(format!("duplicate template id {}", template.id)));
            }
            templates.insert(slot, template);
        }
        if let Some(missing) = SlotName::ALL.iter().find(|s| !templates.contains_key(s)) {
            return Err(QuestionError::Catalog(format!("no template for slot {missing}")));
        }
        Ok(TemplateCatalog { templates })
    }
}

impl From<TemplateCatalog> for BTreeMap<String, QuestionTemplate> {
    fn from(catalog: TemplateCatalog) -> Self {
        catalog.templates.into_iter().map(|(slot, t)| (slot.as_str().to_string(), t)).collect()
    }
}

impl TemplateCatalog {
    pub fn from_json(bytes: &[u8]) -> Result<Self, QuestionError> {
        match serde_json::from_slice(bytes) {
            Ok(catalog) => Ok(catalog),
            Err(e) => Err(QuestionError::Catalog(e.to_string())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, QuestionError> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn template(&self, slot: SlotName) -> &QuestionTemplate {
        &self.templates[&slot]
    }

    pub fn generate(&self, prompt: &QuestionPrompt) -> GeneratedQuestion {
        let frame = &prompt.frame;
        let asked_slot = if prompt.target_slot != SlotName::Action && !frame.has(SlotName::Action) {
            SlotName::Action
        } else {
            prompt.target_slot
        };
        let template = self.template(asked_slot);
        let text = render(&template.pattern, frame);
        GeneratedQuestion {
            text,
            template_id: template.id.clone(),
            target_slot: prompt.target_slot,
            asked_slot,
        }
    }

    /// One question per missing required slot in priority order, at most `limit`.
    pub fn suggest(&self, frame: &SemanticFrame, required: &SlotSet, limit: usize) -> Vec<GeneratedQuestion> {
        frame_missing_slots(frame, required)
            .into_iter()
            .take(limit)
            .map(|slot| self.generate(&QuestionPrompt::missing(frame.clone(), slot).expect("slot is missing")))
            .collect()
    }
}

fn render(pattern: &str, frame: &SemanticFrame) -> String {
    let filled = pattern
        .replace("{action}", &frame.spans(SlotName::Action).join(" and "))
        .replace("{receiver}", &frame.spans(SlotName::Receiver).join(" and "));
    let collapsed = filled.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.replace(" ?", "?")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPrompt {
    pub frame: SemanticFrame,
    pub target_slot: SlotName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_text: Option<String>,
    /// Allows asking about a slot that is already filled.
    #[serde(default)]
    pub confirmation: bool,
}

impl QuestionPrompt {
    pub fn missing(frame: SemanticFrame, target_slot: SlotName) -> Result<Self, QuestionError> {
        if frame.has(target_slot) {
            return Err(QuestionError::SlotFilled(target_slot));
        }
        Ok(QuestionPrompt { frame, target_slot, context_text: None, confirmation: false })
    }

    pub fn confirm(frame: SemanticFrame, target_slot: SlotName) -> Self {
        QuestionPrompt { frame, target_slot, context_text: None, confirmation: true }
    }

    pub fn with_context(mut self, text: impl Into<String>) -> Self {
        self.context_text = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub text: String,
    pub template_id: String,
    /// Slot the prompt asked for.
    pub target_slot: SlotName,
    /// Slot the question actually addresses; Action when falling back.
    pub asked_slot: SlotName,
}

pub fn generate_question(prompt: &QuestionPrompt) -> GeneratedQuestion {
    TemplateCatalog::default().generate(prompt)
}

pub fn suggest_questions(frame: &SemanticFrame, required: &SlotSet, limit: usize) -> Vec<GeneratedQuestion> {
    TemplateCatalog::default().suggest(frame, required, limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SlotName::*;

    fn ask(frame: SemanticFrame, slot: SlotName) -> GeneratedQuestion {
        generate_question(&QuestionPrompt::missing(frame, slot).unwrap())
    }

    #[test]
    fn tool_question() {
        let q = ask(SemanticFrame::new().with(Action, "chop").with(Receiver, "the onion"), Tool);
        assert_eq!(q.text, "What are you using to chop the onion?");
        assert_eq!(q.template_id, "Tool-1");
    }

    #[test]
    fn generic_action_question() {
        let q = ask(SemanticFrame::new(), Action);
        assert_eq!((q.text.as_str(), q.template_id.as_str()), ("What are you doing right now?", "Action-1"));
    }

    #[test]
    fn extent_without_receiver() {
        let q = ask(SemanticFrame::new().with(Action, "stir"), Extent);
        assert_eq!(q.text, "Until when do you stir?");
        assert_eq!(q.template_id, "Extent-1");
    }

    #[test]
    fn falls_back_without_action() {
        let q = ask(SemanticFrame::new().with(Receiver, "the rice"), Tool);
        assert_eq!(q.text, "What are you doing right now?");
        assert_eq!((q.target_slot, q.asked_slot), (Tool, Action));
    }

    #[test]
    fn joins_multiple_spans() {
        let f = SemanticFrame::new().with(Action, "cut").with(Action, "fry").with(Receiver, "the onion");
        assert_eq!(ask(f, Location).text, "Where do you cut and fry the onion?");
    }

    #[test]
    fn filled_slot_needs_confirmation() {
        let f = SemanticFrame::new().with(Action, "chop").with(Tool, "a knife");
        assert!(matches!(QuestionPrompt::missing(f.clone(), Tool), Err(QuestionError::SlotFilled(Tool))));
        let q = generate_question(&QuestionPrompt::confirm(f, Tool));
        assert_eq!(q.text, "What are you using to chop?");
    }

    #[test]
    fn suggestions_follow_priority() {
        let f = SemanticFrame::new().with(Action, "chop");
        let required: SlotSet = [Location, Tool].into();
        let got: Vec<_> = suggest_questions(&f, &required, 2).into_iter().map(|q| q.template_id).collect();
        assert_eq!(got, ["Tool-1", "Location-1"]);

        let all: SlotSet = [Tool, Receiver, Purpose].into();
        let got = suggest_questions(&f, &all, 1);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].target_slot, Tool);

        let complete = f.with(Tool, "knife");
        assert!(suggest_questions(&complete, &[Action, Tool].into(), 5).is_empty());
    }

    #[test]
    fn catalog_round_trip_and_validation() {
        let catalog = TemplateCatalog::default();
        let parsed = TemplateCatalog::from_json(catalog.to_json().as_bytes()).unwrap();
        assert_eq!(parsed, catalog);

        let mut raw: BTreeMap<String, QuestionTemplate> = catalog.clone().into();
        raw.get_mut("Tool").unwrap().pattern = "With what do you {verb}?".into();
        let err = TemplateCatalog::try_from(raw).unwrap_err();
        assert!(err.to_string().contains("unknown placeholder"), "{err}");

        let mut raw: BTreeMap<String, QuestionTemplate> = catalog.clone().into();
        raw.remove("Note");
        assert!(TemplateCatalog::try_from(raw).is_err());

        let mut raw: BTreeMap<String, QuestionTemplate> = catalog.into();
        raw.get_mut("Note").unwrap().id = "Tool-1".into();
        assert!(TemplateCatalog::try_from(raw).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn shipped_catalog_matches_default() {
        let shipped = include_bytes!("../../../config/templates.json");
        assert_eq!(TemplateCatalog::from_json(shipped).unwrap(), TemplateCatalog::default());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn frame_strategy() -> impl Strategy<Value = SemanticFrame> {
            let words = prop::sample::select(vec!["chop", "the onion", "stir", "a pan", "rice", "knife"]);
            prop::collection::vec((0usize..10, words), 0..6).prop_map(|pairs| {
                let mut f = SemanticFrame::new();
                for (slot, word) in pairs {
                    f.push(SlotName::ALL[slot], word);
                }
                f
            })
        }

        proptest! {
            #[test]
            fn suggestion_count(frame in frame_strategy(), mask in 0u16..1024, k in 1usize..12) {
                let required: SlotSet = SlotName::ALL.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, s)| *s).collect();
                let missing = frame_missing_slots(&frame, &required).len();
                prop_assert_eq!(suggest_questions(&frame, &required, k).len(), k.min(missing));
            }

            #[test]
            fn questions_only_use_frame_entities(frame in frame_strategy(), slot in 0usize..10) {
                let slot = SlotName::ALL[slot];
                let q = generate_question(&QuestionPrompt::confirm(frame.clone(), slot));
                let mut stripped = q.text.clone();
                for span in frame.spans(Action).iter().chain(frame.spans(Receiver)) {
                    stripped = stripped.replace(span.as_str(), "");
                }
                let template = render(&TemplateCatalog::default().template(q.asked_slot).pattern, &SemanticFrame::new());
                let template_words: Vec<&str> = template.split_whitespace().collect();
                for word in stripped.split(|c: char| c.is_whitespace() || c == '?').filter(|w| !w.is_empty() && *w != "and") {
                    prop_assert!(template_words.iter().any(|t| t.trim_end_matches('?') == word), "{word} in {}", q.text);
                }
                prop_assert_eq!(q.clone(), generate_question(&QuestionPrompt::confirm(frame, slot)));
            }
        }
    }
}
