//! Task documents, semantic frames and stream primitives.
//!
//! A [`Spec`] is an ordered list of [`SpecItem`]s, each carrying a
//! [`SemanticFrame`] and a list of finer-grained [`AtomicAction`]s that have
//! frames of their own. Everything here is immutable once built.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed set of frame slots. Declaration order is also the question
/// priority order used by the question generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlotName {
    Action,
    Tool,
    Receiver,
    Location,
    Temporal,
    Direction,
    Manner,
    Extent,
    Purpose,
    Note,
}

impl SlotName {
    pub const ALL: [SlotName; 10] = [
        SlotName::Action,
        SlotName::Tool,
        SlotName::Receiver,
        SlotName::Location,
        SlotName::Temporal,
        SlotName::Direction,
        SlotName::Manner,
        SlotName::Extent,
        SlotName::Purpose,
        SlotName::Note,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SlotName::Action => "Action",
            SlotName::Tool => "Tool",
            SlotName::Receiver => "Receiver",
            SlotName::Location => "Location",
            SlotName::Temporal => "Temporal",
            SlotName::Direction => "Direction",
            SlotName::Manner => "Manner",
            SlotName::Extent => "Extent",
            SlotName::Purpose => "Purpose",
            SlotName::Note => "Note",
        }
    }

    /// Position in [`SlotName::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown slot name: {0}")]
pub struct UnknownSlot(pub String);

impl FromStr for SlotName {
    type Err = UnknownSlot;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SlotName::ALL
            .into_iter()
            .find(|slot| slot.as_str() == s)
            .ok_or_else(|| UnknownSlot(s.to_string()))
    }
}

pub type SlotSet = BTreeSet<SlotName>;

/// All ten slots.
pub fn all_slots() -> SlotSet {
    SlotName::ALL.into_iter().collect()
}

/// Action-centric frame: each slot holds zero or more text spans.
///
/// Slots never hold an empty span list; a slot is either absent or has at
/// least one span. Serializes as a JSON object `{slot: [spans]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct SemanticFrame {
    slots: BTreeMap<SlotName, Vec<String>>,
}

impl SemanticFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, slot: SlotName, span: impl Into<String>) -> Self {
        self.push(slot, span);
        self
    }

    /// Appends a span, keeping duplicates.
    pub fn push(&mut self, slot: SlotName, span: impl Into<String>) {
        self.slots.entry(slot).or_default().push(span.into());
    }

    pub fn spans(&self, slot: SlotName) -> &[String] {
        self.slots.get(&slot).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has(&self, slot: SlotName) -> bool {
        !self.spans(slot).is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn filled_slots(&self) -> SlotSet {
        self.slots.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SlotName, &[String])> {
        self.slots.iter().map(|(slot, spans)| (*slot, spans.as_slice()))
    }

    pub fn is_complete_for(&self, required: &SlotSet) -> bool {
        frame_missing_slots(self, required).is_empty()
    }

    /// Per-slot union with de-duplication; existing spans keep their order
    /// and new spans are appended. Returns whether anything was added.
    pub fn merge_union(&mut self, other: &SemanticFrame) -> bool {
        let mut changed = false;
        for (slot, spans) in other.iter() {
            let entry = self.slots.entry(slot).or_default();
            for span in spans {
                if !entry.contains(span) {
                    entry.push(span.clone());
                    changed = true;
                }
            }
        }
        changed
    }
}

impl TryFrom<BTreeMap<String, Vec<String>>> for SemanticFrame {
    type Error = UnknownSlot;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> Result<Self, Self::Error> {
        let mut slots = BTreeMap::new();
        for (name, spans) in raw {
            let slot: SlotName = name.parse()?;
            if !spans.is_empty() {
                slots.insert(slot, spans);
            }
        }
        Ok(SemanticFrame { slots })
    }
}

impl From<SemanticFrame> for BTreeMap<String, Vec<String>> {
    fn from(frame: SemanticFrame) -> Self {
        frame
            .slots
            .into_iter()
            .map(|(slot, spans)| (slot.as_str().to_string(), spans))
            .collect()
    }
}

/// Slots of `required` that have no span in `frame`.
pub fn frame_missing_slots(frame: &SemanticFrame, required: &SlotSet) -> SlotSet {
    required.iter().copied().filter(|slot| !frame.has(*slot)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicAction {
    pub index: usize,
    pub text: String,
    pub frame: SemanticFrame,
    pub optional: bool,
    pub interchangeable_group: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecItem {
    pub index: usize,
    pub text: String,
    pub image_ref: Option<String>,
    pub frame: SemanticFrame,
    pub actions: Vec<AtomicAction>,
}

/// A task document: ordered spec items, each broken into atomic actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    spec_id: String,
    title: String,
    items: Vec<SpecItem>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("malformed spec document: {0}")]
    Malformed(String),
    #[error("unknown slot name: {0}")]
    UnknownSlot(String),
    #[error("spec has no items")]
    EmptyItems,
    #[error("non-contiguous or unordered indices: expected item {expected}, found {found}")]
    ItemIndex { expected: usize, found: usize },
    #[error("non-contiguous or unordered indices in item {item}: expected action {expected}, found {found}")]
    ActionIndex { item: usize, expected: usize, found: usize },
    #[error("item {0} has neither text nor actions")]
    EmptyItem(usize),
    #[error("action {action} of item {item} has an empty Action slot")]
    ActionWithoutVerb { item: usize, action: usize },
    #[error("interchangeable group {group:?} spans items {first} and {second}")]
    GroupAcrossItems { group: String, first: usize, second: usize },
    #[error("duplicate spec id {0}")]
    DuplicateSpecId(String),
}

impl Spec {
    /// Builds a spec, checking every structural invariant.
    pub fn new(spec_id: impl Into<String>, title: impl Into<String>, items: Vec<SpecItem>) -> Result<Self, SpecError> {
        if items.is_empty() {
            return Err(SpecError::EmptyItems);
        }
        let mut group_owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (expected, item) in items.iter().enumerate() {
            if item.index != expected {
                return Err(SpecError::ItemIndex { expected, found: item.index });
            }
            if item.actions.is_empty() && item.text.trim().is_empty() {
                return Err(SpecError::EmptyItem(item.index));
            }
            for (expected_action, action) in item.actions.iter().enumerate() {
                if action.index != expected_action {
                    return Err(SpecError::ActionIndex {
                        item: item.index,
                        expected: expected_action,
                        found: action.index,
                    });
                }
                if !action.frame.has(SlotName::Action) {
                    return Err(SpecError::ActionWithoutVerb { item: item.index, action: action.index });
                }
                if let Some(group) = &action.interchangeable_group {
                    let owner = *group_owner.entry(group.as_str()).or_insert(item.index);
                    if owner != item.index {
                        return Err(SpecError::GroupAcrossItems {
                            group: group.clone(),
                            first: owner,
                            second: item.index,
                        });
                    }
                }
            }
        }
        Ok(Spec { spec_id: spec_id.into(), title: title.into(), items })
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn items(&self) -> &[SpecItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, index: usize) -> Option<&SpecItem> {
        self.items.get(index)
    }

    pub fn to_document(&self) -> SpecDocument {
        SpecDocument {
            spec_id: self.spec_id.clone(),
            title: self.title.clone(),
            items: self
                .items
                .iter()
                .map(|item| ItemDocument {
                    index: item.index,
                    text: item.text.clone(),
                    image_ref: item.image_ref.clone(),
                    frame: item.frame.clone().into(),
                    actions: item
                        .actions
                        .iter()
                        .map(|action| ActionDocument {
                            index: action.index,
                            text: action.text.clone(),
                            frame: action.frame.clone().into(),
                            optional: action.optional,
                            group: action.interchangeable_group.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// On-disk JSON form of a [`Spec`]. Field names are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub spec_id: String,
    pub title: String,
    pub items: Vec<ItemDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemDocument {
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub frame: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub actions: Vec<ActionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDocument {
    pub index: usize,
    pub text: String,
    #[serde(default)]
    pub frame: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub optional: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

fn frame_from_raw(raw: BTreeMap<String, Vec<String>>) -> Result<SemanticFrame, SpecError> {
    SemanticFrame::try_from(raw).map_err(|UnknownSlot(name)| SpecError::UnknownSlot(name))
}

impl TryFrom<SpecDocument> for Spec {
    type Error = SpecError;

    fn try_from(doc: SpecDocument) -> Result<Self, Self::Error> {
        let mut items = Vec::with_capacity(doc.items.len());
        for item in doc.items {
            let mut actions = Vec::with_capacity(item.actions.len());
            for action in item.actions {
                actions.push(AtomicAction {
                    index: action.index,
                    text: action.text,
                    frame: frame_from_raw(action.frame)?,
                    optional: action.optional,
                    interchangeable_group: action.group,
                });
            }
            items.push(SpecItem {
                index: item.index,
                text: item.text,
                image_ref: item.image_ref,
                frame: frame_from_raw(item.frame)?,
                actions,
            });
        }
        Spec::new(doc.spec_id, doc.title, items)
    }
}

/// Parses and validates a spec document (UTF-8 JSON).
pub fn load_spec(document: &[u8]) -> Result<Spec, SpecError> {
    let doc: SpecDocument = serde_json::from_slice(document).map_err(|e| SpecError::Malformed(e.to_string()))?;
    Spec::try_from(doc)
}

pub fn serialize_spec(spec: &Spec) -> Vec<u8> {
    serde_json::to_vec_pretty(&spec.to_document()).expect("spec documents always serialize")
}

/// A set of specs keyed by their unique id.
#[derive(Debug, Clone, Default)]
pub struct SpecLibrary {
    specs: BTreeMap<String, std::sync::Arc<Spec>>,
}

impl SpecLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: Spec) -> Result<std::sync::Arc<Spec>, SpecError> {
        if self.specs.contains_key(spec.spec_id()) {
            return Err(SpecError::DuplicateSpecId(spec.spec_id().to_string()));
        }
        let spec = std::sync::Arc::new(spec);
        self.specs.insert(spec.spec_id().to_string(), spec.clone());
        Ok(spec)
    }

    pub fn get(&self, spec_id: &str) -> Option<std::sync::Arc<Spec>> {
        self.specs.get(spec_id).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = &std::sync::Arc<Spec>> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// One ASR transcription chunk with session-relative times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptChunk {
    pub chunk_index: u64,
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("chunk {0} ends before it starts")]
    InvertedChunk(u64),
    #[error("chunk {0} is out of order")]
    ChunkOrder(u64),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("vector at {t_ms} ms has dimension {found}, expected {expected}")]
    DimMismatch { t_ms: u64, expected: usize, found: usize },
    #[error("non-monotone timestamps: {prev} ms then {next} ms")]
    NonMonotone { prev: u64, next: u64 },
    #[error("non-finite vector at {0} ms")]
    NonFinite(u64),
}

impl TranscriptChunk {
    pub fn new(chunk_index: u64, text: impl Into<String>, start_ms: u64, end_ms: u64) -> Result<Self, StreamError> {
        if start_ms > end_ms {
            return Err(StreamError::InvertedChunk(chunk_index));
        }
        Ok(TranscriptChunk { chunk_index, text: text.into(), start_ms, end_ms })
    }
}

/// Checks ordering invariants of a chunk sequence.
pub fn validate_chunks(chunks: &[TranscriptChunk]) -> Result<(), StreamError> {
    for chunk in chunks {
        if chunk.start_ms > chunk.end_ms {
            return Err(StreamError::InvertedChunk(chunk.chunk_index));
        }
    }
    for pair in chunks.windows(2) {
        if pair[1].chunk_index <= pair[0].chunk_index || pair[1].start_ms < pair[0].start_ms {
            return Err(StreamError::ChunkOrder(pair[1].chunk_index));
        }
    }
    Ok(())
}

/// Timestamped fixed-dimension vectors (video-frame features or text
/// embeddings) with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStream {
    dim: usize,
    cadence_ms: u64,
    entries: Vec<(u64, Vec<f32>)>,
}

impl EmbeddingStream {
    pub fn new(dim: usize, cadence_ms: u64) -> Result<Self, StreamError> {
        if dim == 0 {
            return Err(StreamError::ZeroDim);
        }
        Ok(EmbeddingStream { dim, cadence_ms, entries: Vec::new() })
    }

    pub fn from_entries(dim: usize, cadence_ms: u64, entries: Vec<(u64, Vec<f32>)>) -> Result<Self, StreamError> {
        let mut stream = Self::new(dim, cadence_ms)?;
        stream.entries.reserve(entries.len());
        for (t_ms, vector) in entries {
            stream.push(t_ms, vector)?;
        }
        Ok(stream)
    }

    pub fn push(&mut self, t_ms: u64, vector: Vec<f32>) -> Result<(), StreamError> {
        if vector.len() != self.dim {
            return Err(StreamError::DimMismatch { t_ms, expected: self.dim, found: vector.len() });
        }
        if let Some((prev, _)) = self.entries.last() {
            if t_ms <= *prev {
                return Err(StreamError::NonMonotone { prev: *prev, next: t_ms });
            }
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(StreamError::NonFinite(t_ms));
        }
        self.entries.push((t_ms, vector));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cadence_ms(&self) -> u64 {
        self.cadence_ms
    }

    pub fn entries(&self) -> &[(u64, Vec<f32>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks that no spec id repeats across a batch of documents.
pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<(), SpecError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(SpecError::DuplicateSpecId(id.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(items: serde_json::Value) -> Vec<u8> {
        serde_json::to_vec(&serde_json::json!({
            "spec_id": "rice",
            "title": "Cook rice",
            "items": items,
        }))
        .unwrap()
    }

    fn three_items() -> serde_json::Value {
        serde_json::json!([
            {"index": 0, "text": "Wash the rice", "frame": {"Action": ["wash"], "Receiver": ["the rice"]},
             "actions": [{"index": 0, "text": "rinse rice", "frame": {"Action": ["rinse"]}, "optional": false, "group": "prep"},
                         {"index": 1, "text": "drain water", "frame": {"Action": ["drain"]}, "optional": true, "group": "prep"}]},
            {"index": 1, "text": "Add water", "image_ref": "img/water.png", "frame": {"Action": ["add"]}, "actions": []},
            {"index": 2, "text": "Boil until soft", "frame": {"Action": ["boil"], "Extent": ["soft"]}, "actions": []}
        ])
    }

    #[test]
    fn loads_three_item_document() {
        let spec = load_spec(&doc(three_items())).unwrap();
        assert_eq!(spec.len(), 3);
        let indices: Vec<_> = spec.items().iter().map(|i| i.index).collect();
        assert_eq!(indices, vec![0, 1, 2]);
        assert_eq!(spec.items()[1].image_ref.as_deref(), Some("img/water.png"));
        assert!(spec.items()[0].actions[1].optional);
    }

    #[test]
    fn rejects_unordered_indices() {
        let items = serde_json::json!([
            {"index": 2, "text": "a", "frame": {}},
            {"index": 0, "text": "b", "frame": {}},
            {"index": 1, "text": "c", "frame": {}}
        ]);
        let err = load_spec(&doc(items)).unwrap_err();
        assert!(err.to_string().contains("non-contiguous or unordered indices"), "{err}");
    }

    #[test]
    fn rejects_duplicate_indices() {
        let items = serde_json::json!([
            {"index": 0, "text": "a", "frame": {}},
            {"index": 0, "text": "b", "frame": {}}
        ]);
        assert!(matches!(load_spec(&doc(items)), Err(SpecError::ItemIndex { expected: 1, found: 0 })));
    }

    #[test]
    fn rejects_unknown_slot() {
        let items = serde_json::json!([
            {"index": 0, "text": "a", "frame": {}},
            {"index": 1, "text": "b", "frame": {"Agent": ["me"]}}
        ]);
        let err = load_spec(&doc(items)).unwrap_err();
        assert!(err.to_string().contains("unknown slot name"), "{err}");
    }

    #[test]
    fn rejects_empty_items_and_malformed_json() {
        assert!(matches!(load_spec(&doc(serde_json::json!([]))), Err(SpecError::EmptyItems)));
        assert!(matches!(load_spec(b"{not json"), Err(SpecError::Malformed(_))));
    }

    #[test]
    fn rejects_structural_violations() {
        let no_verb = serde_json::json!([
            {"index": 0, "text": "a", "frame": {}, "actions": [{"index": 0, "text": "x", "frame": {"Tool": ["k"]}}]}
        ]);
        assert!(matches!(load_spec(&doc(no_verb)), Err(SpecError::ActionWithoutVerb { .. })));

        let empty = serde_json::json!([{"index": 0, "text": "  ", "frame": {}}]);
        assert!(matches!(load_spec(&doc(empty)), Err(SpecError::EmptyItem(0))));

        let split_group = serde_json::json!([
            {"index": 0, "text": "a", "actions": [{"index": 0, "text": "x", "frame": {"Action": ["x"]}, "group": "g"}]},
            {"index": 1, "text": "b", "actions": [{"index": 0, "text": "y", "frame": {"Action": ["y"]}, "group": "g"}]}
        ]);
        assert!(matches!(load_spec(&doc(split_group)), Err(SpecError::GroupAcrossItems { .. })));
    }

    #[test]
    fn serialize_round_trips() {
        let spec = load_spec(&doc(three_items())).unwrap();
        let again = load_spec(&serialize_spec(&spec)).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn library_rejects_duplicate_ids() {
        let mut lib = SpecLibrary::new();
        lib.insert(load_spec(&doc(three_items())).unwrap()).unwrap();
        assert!(matches!(
            lib.insert(load_spec(&doc(three_items())).unwrap()),
            Err(SpecError::DuplicateSpecId(_))
        ));
        assert!(check_unique_ids(["a", "b", "a"]).is_err());
    }

    #[test]
    fn missing_slots_cases() {
        let chop = SemanticFrame::new().with(SlotName::Action, "chop");
        let required: SlotSet = [SlotName::Action, SlotName::Tool].into();
        assert_eq!(frame_missing_slots(&chop, &required), [SlotName::Tool].into());
        assert!(frame_missing_slots(&chop, &[SlotName::Action].into()).is_empty());
        assert_eq!(frame_missing_slots(&SemanticFrame::new(), &all_slots()), all_slots());
    }

    #[test]
    fn merge_union_dedups() {
        let mut frame = SemanticFrame::new().with(SlotName::Tool, "knife");
        assert!(frame.merge_union(&SemanticFrame::new().with(SlotName::Tool, "board").with(SlotName::Tool, "knife")));
        assert_eq!(frame.spans(SlotName::Tool), ["knife", "board"]);
        assert!(!frame.merge_union(&SemanticFrame::new().with(SlotName::Tool, "board")));
    }

    #[test]
    fn chunk_and_stream_invariants() {
        assert!(TranscriptChunk::new(0, "x", 10, 5).is_err());
        let chunks = vec![
            TranscriptChunk::new(0, "a", 0, 10).unwrap(),
            TranscriptChunk::new(0, "b", 20, 30).unwrap(),
        ];
        assert_eq!(validate_chunks(&chunks), Err(StreamError::ChunkOrder(0)));

        let mut stream = EmbeddingStream::new(2, 1000).unwrap();
        stream.push(0, vec![1.0, 0.0]).unwrap();
        assert!(matches!(stream.push(0, vec![1.0, 0.0]), Err(StreamError::NonMonotone { .. })));
        assert!(matches!(stream.push(5, vec![1.0]), Err(StreamError::DimMismatch { .. })));
        assert!(matches!(stream.push(5, vec![f32::NAN, 0.0]), Err(StreamError::NonFinite(5))));
        assert_eq!(EmbeddingStream::new(0, 1000), Err(StreamError::ZeroDim));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_frame() -> impl Strategy<Value = SemanticFrame> {
            proptest::collection::btree_map(0usize..10, proptest::collection::vec("[a-z]{1,6}", 1..3), 0..10).prop_map(
                |raw| {
                    let mut frame = SemanticFrame::new();
                    for (slot, spans) in raw {
                        for span in spans {
                            frame.push(SlotName::ALL[slot], span);
                        }
                    }
                    frame
                },
            )
        }

        fn arb_slots() -> impl Strategy<Value = SlotSet> {
            proptest::collection::btree_set(0usize..10, 0..10)
                .prop_map(|set| set.into_iter().map(|i| SlotName::ALL[i]).collect())
        }

        fn arb_spec() -> impl Strategy<Value = Spec> {
            proptest::collection::vec(
                ("[a-z ]{1,20}", arb_frame(), proptest::collection::vec(("[a-z]{1,8}", any::<bool>()), 0..3)),
                1..5,
            )
            .prop_map(|raw| {
                let items = raw
                    .into_iter()
                    .enumerate()
                    .map(|(index, (text, frame, actions))| SpecItem {
                        index,
                        text: format!("x{text}"),
                        image_ref: None,
                        frame,
                        actions: actions
                            .into_iter()
                            .enumerate()
                            .map(|(a, (verb, optional))| AtomicAction {
                                index: a,
                                text: verb.clone(),
                                frame: SemanticFrame::new().with(SlotName::Action, verb),
                                optional,
                                interchangeable_group: optional.then(|| format!("g{index}")),
                            })
                            .collect(),
                    })
                    .collect();
                Spec::new("s", "t", items).unwrap()
            })
        }

        proptest! {
            #[test]
            fn missing_never_intersects_filled(frame in arb_frame(), required in arb_slots()) {
                let missing = frame_missing_slots(&frame, &required);
                prop_assert!(missing.is_subset(&required));
                prop_assert!(missing.is_disjoint(&frame.filled_slots()));
            }

            #[test]
            fn load_inverts_serialize(spec in arb_spec()) {
                prop_assert_eq!(load_spec(&serialize_spec(&spec)).unwrap(), spec);
            }
        }
    }
}
