//! Semantic frame extraction.
//!
//! A base tagger labels tokens in its own BIO label space (PropBank-style
//! roles for the bundled rule tagger, anything for ingested tagger output).
//! A [`LabelMapping`] then projects those labels linearly onto BIO labels
//! over the ten frame slots, and contiguous spans are assembled into a
//! [`SemanticFrame`].

mod eval;
mod mapping;
mod tagger;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SemanticFrame, SlotName};

pub use eval::{evaluate_frames, FrameScores, SlotScore};
pub use mapping::{build_mapping, LabelMapping};
pub use tagger::{
    default_mapping, parse_pretagged_jsonl, tokenize, BaseTagger, PreTaggedSentence, RuleTagger, SourceTagging,
    RULE_TAGGER_LABELS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("invalid BIO label {0:?}")]
    InvalidLabel(String),
    #[error("unknown source label {0:?}")]
    UnknownSourceLabel(String),
    #[error("duplicate source label {0:?}")]
    DuplicateSourceLabel(String),
    #[error("BIO kind mismatch: {source_label} -> {target}")]
    BioKindMismatch { source_label: String, target: String },
    #[error("conflicting mapping for {source_label}: {first} and {second}")]
    ConflictingMapping { source_label: String, first: String, second: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("pre-tagged line {line}: {message}")]
    PreTagged { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioKind {
    Begin,
    Inside,
    Outside,
}

/// Splits `B-x` / `I-x` / `O` into kind and role.
pub fn parse_bio(label: &str) -> Result<(BioKind, Option<&str>), FrameError> {
    if label == "O" {
        return Ok((BioKind::Outside, None));
    }
    let (kind, role) = match label.split_once('-') {
        Some(("B", role)) => (BioKind::Begin, role),
        Some(("I", role)) => (BioKind::Inside, role),
        _ => return Err(FrameError::InvalidLabel(label.to_string())),
    };
    if role.is_empty() {
        return Err(FrameError::InvalidLabel(label.to_string()));
    }
    Ok((kind, Some(role)))
}

/// BIO label over the frame slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetLabel {
    O,
    B(SlotName),
    I(SlotName),
}

/// `O`, then `B-`/`I-` for each slot in slot order.
pub const TARGET_LABEL_COUNT: usize = 1 + 2 * SlotName::ALL.len();

impl TargetLabel {
    pub fn all() -> Vec<TargetLabel> {
        (0..TARGET_LABEL_COUNT).map(TargetLabel::from_index).collect()
    }

    pub fn index(self) -> usize {
        match self {
            TargetLabel::O => 0,
            TargetLabel::B(slot) => 1 + 2 * slot.ordinal(),
            TargetLabel::I(slot) => 2 + 2 * slot.ordinal(),
        }
    }

    pub fn from_index(index: usize) -> TargetLabel {
        assert!(index < TARGET_LABEL_COUNT, "target label index {index} out of range");
        if index == 0 {
            return TargetLabel::O;
        }
        let slot = SlotName::ALL[(index - 1) / 2];
        if (index - 1).is_multiple_of(2) {
            TargetLabel::B(slot)
        } else {
            TargetLabel::I(slot)
        }
    }

    pub fn kind(self) -> BioKind {
        match self {
            TargetLabel::O => BioKind::Outside,
            TargetLabel::B(_) => BioKind::Begin,
            TargetLabel::I(_) => BioKind::Inside,
        }
    }

    pub fn slot(self) -> Option<SlotName> {
        match self {
            TargetLabel::O => None,
            TargetLabel::B(slot) | TargetLabel::I(slot) => Some(slot),
        }
    }
}

impl fmt::Display for TargetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetLabel::O => f.write_str("O"),
            TargetLabel::B(slot) => write!(f, "B-{slot}"),
            TargetLabel::I(slot) => write!(f, "I-{slot}"),
        }
    }
}

impl FromStr for TargetLabel {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || FrameError::InvalidLabel(s.to_string());
        match parse_bio(s)? {
            (BioKind::Outside, _) => Ok(TargetLabel::O),
            (BioKind::Begin, Some(role)) => Ok(TargetLabel::B(role.parse().map_err(|_| invalid())?)),
            (BioKind::Inside, Some(role)) => Ok(TargetLabel::I(role.parse().map_err(|_| invalid())?)),
            _ => Err(invalid()),
        }
    }
}

impl Serialize for TargetLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TargetLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Promotes every `I-x` not preceded by `B-x`/`I-x` to `B-x`.
pub fn repair_bio(tags: &[TargetLabel]) -> Vec<TargetLabel> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev = TargetLabel::O;
    for &tag in tags {
        let fixed = match tag {
            TargetLabel::I(slot) if prev.slot() != Some(slot) => TargetLabel::B(slot),
            other => other,
        };
        out.push(fixed);
        prev = fixed;
    }
    out
}

/// Per-token argmax over target scores; lowest index wins ties, so an
/// all-zero row decodes to `O`.
pub fn decode_scores(scores: &[Vec<f64>]) -> Vec<TargetLabel> {
    scores
        .iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = i;
                }
            }
            TargetLabel::from_index(best)
        })
        .collect()
}

/// One labelled span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub slot: SlotName,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Contiguous spans of a repaired tag sequence, in token order.
pub fn collect_spans(tokens: &[String], tags: &[TargetLabel]) -> Vec<Span> {
    let tags = repair_bio(tags);
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<(SlotName, usize)> = None;
    let close = |spans: &mut Vec<Span>, open: Option<(SlotName, usize)>, end: usize| {
        if let Some((slot, start)) = open {
            spans.push(Span { slot, start, end, text: tokens[start..end].join(" ") });
        }
    };
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            TargetLabel::B(slot) => {
                close(&mut spans, open.take(), i);
                open = Some((*slot, i));
            }
            TargetLabel::I(_) => {}
            TargetLabel::O => close(&mut spans, open.take(), i),
        }
    }
    close(&mut spans, open, tags.len());
    spans
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameExtraction {
    pub frame: SemanticFrame,
    /// No Action span was found; `frame` is then empty.
    pub no_action: bool,
    /// Number of Action spans; more than one means several predicates were
    /// merged into one frame.
    pub action_spans: usize,
}

/// Assembles a frame from tokens and target tags (repaired first).
pub fn extract_frame(tokens: &[String], tags: &[TargetLabel]) -> Result<FrameExtraction, FrameError> {
    if tokens.len() != tags.len() {
        return Err(FrameError::LengthMismatch(tokens.len(), tags.len()));
    }
    let spans = collect_spans(tokens, tags);
    let action_spans = spans.iter().filter(|s| s.slot == SlotName::Action).count();
    if action_spans == 0 {
        return Ok(FrameExtraction { frame: SemanticFrame::new(), no_action: true, action_spans });
    }
    let mut frame = SemanticFrame::new();
    for span in spans {
        frame.push(span.slot, span.text);
    }
    Ok(FrameExtraction { frame, no_action: false, action_spans })
}

/// One frame per Action span. Argument spans attach to the closest
/// preceding Action, or to the first one if they come before any.
pub fn split_by_action(tokens: &[String], tags: &[TargetLabel]) -> Result<Vec<SemanticFrame>, FrameError> {
    if tokens.len() != tags.len() {
        return Err(FrameError::LengthMismatch(tokens.len(), tags.len()));
    }
    let spans = collect_spans(tokens, tags);
    let mut frames: Vec<SemanticFrame> = spans
        .iter()
        .filter(|s| s.slot == SlotName::Action)
        .map(|s| SemanticFrame::new().with(SlotName::Action, s.text.clone()))
        .collect();
    if frames.is_empty() {
        return Ok(frames);
    }
    let mut current: Option<usize> = None;
    for span in &spans {
        if span.slot == SlotName::Action {
            current = Some(current.map_or(0, |c| c + 1));
        } else {
            frames[current.unwrap_or(0)].push(span.slot, span.text.clone());
        }
    }
    Ok(frames)
}

/// Tokens with source and target tags and the target score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub source_tags: Vec<String>,
    pub target_tags: Vec<TargetLabel>,
    pub scores: Vec<Vec<f64>>,
}

/// Base tagger plus mapping layer.
#[derive(Debug, Clone)]
pub struct FrameExtractor {
    mapping: LabelMapping,
}

impl FrameExtractor {
    pub fn new(mapping: LabelMapping) -> Self {
        FrameExtractor { mapping }
    }

    /// The rule tagger's label set with the default expert mapping.
    pub fn with_default_mapping() -> Self {
        FrameExtractor { mapping: default_mapping() }
    }

    pub fn mapping(&self) -> &LabelMapping {
        &self.mapping
    }

    /// Maps a base tagging onto frame labels.
    pub fn project(&self, tagging: SourceTagging) -> Result<TaggedSentence, FrameError> {
        if tagging.tokens.len() != tagging.source_tags.len() {
            return Err(FrameError::LengthMismatch(tagging.tokens.len(), tagging.source_tags.len()));
        }
        let source_scores = match tagging.scores {
            Some(scores) => {
                if scores.len() != tagging.tokens.len() {
                    return Err(FrameError::LengthMismatch(tagging.tokens.len(), scores.len()));
                }
                scores
            }
            None => self.mapping.one_hot(&tagging.source_tags)?,
        };
        let scores = self.mapping.apply(&source_scores)?;
        let target_tags = repair_bio(&decode_scores(&scores));
        Ok(TaggedSentence { tokens: tagging.tokens, source_tags: tagging.source_tags, target_tags, scores })
    }

    pub fn extract(&self, tagging: SourceTagging) -> Result<(TaggedSentence, FrameExtraction), FrameError> {
        let tagged = self.project(tagging)?;
        let extraction = extract_frame(&tagged.tokens, &tagged.target_tags)?;
        Ok((tagged, extraction))
    }

    pub fn extract_text(&self, tagger: &dyn BaseTagger, text: &str) -> Result<FrameExtraction, FrameError> {
        Ok(self.extract(tagger.tag(text))?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tags(s: &str) -> Vec<TargetLabel> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn target_label_indexing() {
        let all = TargetLabel::all();
        assert_eq!(all.len(), 21);
        for (i, label) in all.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(label.to_string().parse::<TargetLabel>().unwrap(), *label);
        }
        assert_eq!(all[1].to_string(), "B-Action");
        assert!("B-Agent".parse::<TargetLabel>().is_err());
        assert!("X-Tool".parse::<TargetLabel>().is_err());
    }

    #[test]
    fn assembles_spans() {
        let got = extract_frame(&toks("wash the rice"), &tags("B-Action B-Receiver I-Receiver")).unwrap();
        assert_eq!(got.frame, SemanticFrame::new().with(SlotName::Action, "wash").with(SlotName::Receiver, "the rice"));
        assert!(!got.no_action);
        assert_eq!(got.action_spans, 1);
    }

    #[test]
    fn all_outside_is_no_action() {
        let got = extract_frame(&toks("hmm okay then"), &tags("O O O")).unwrap();
        assert!(got.no_action);
        assert!(got.frame.is_empty());
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let repaired = repair_bio(&tags("I-Tool I-Tool"));
        assert_eq!(repaired, tags("B-Tool I-Tool"));
        let spans = collect_spans(&toks("t0 t1"), &tags("I-Tool I-Tool"));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "t0 t1");
        // I after a different slot also starts a new span.
        assert_eq!(repair_bio(&tags("B-Action I-Tool O I-Tool")), tags("B-Action B-Tool O B-Tool"));
    }

    #[test]
    fn multiple_spans_keep_order() {
        let got = extract_frame(
            &toks("cut with knife or scissors"),
            &tags("B-Action O B-Tool O B-Tool"),
        )
        .unwrap();
        assert_eq!(got.frame.spans(SlotName::Tool), ["knife", "scissors"]);
    }

    #[test]
    fn splits_per_predicate() {
        let frames = split_by_action(
            &toks("slowly cut onion then fry it"),
            &tags("B-Manner B-Action B-Receiver O B-Action B-Receiver"),
        )
        .unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].spans(SlotName::Manner), ["slowly"]);
        assert_eq!(frames[0].spans(SlotName::Receiver), ["onion"]);
        assert_eq!(frames[1].spans(SlotName::Receiver), ["it"]);
        assert!(split_by_action(&toks("a"), &tags("O")).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(extract_frame(&toks("a b"), &tags("O")).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tags() -> impl Strategy<Value = Vec<TargetLabel>> {
            proptest::collection::vec((0..TARGET_LABEL_COUNT).prop_map(TargetLabel::from_index), 0..20)
        }

        proptest! {
            #[test]
            fn repair_is_idempotent(tags in arb_tags()) {
                let once = repair_bio(&tags);
                prop_assert_eq!(repair_bio(&once), once);
            }

            #[test]
            fn frames_use_only_slot_names(tags in arb_tags()) {
                let tokens: Vec<String> = (0..tags.len()).map(|i| format!("t{i}")).collect();
                let got = extract_frame(&tokens, &tags).unwrap();
                let json = serde_json::to_value(&got.frame).unwrap();
                for key in json.as_object().unwrap().keys() {
                    prop_assert!(key.parse::<SlotName>().is_ok());
                }
                prop_assert_eq!(got.no_action, !tags.iter().any(|t| t.slot() == Some(SlotName::Action)));
            }
        }
    }
}
