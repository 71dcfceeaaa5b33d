//! Base taggers: a deterministic rule tagger over a PropBank-style label set,
//! and ingestion of tagger output produced offline.

use serde::{Deserialize, Serialize};

use super::mapping::{build_mapping, LabelMapping};
use super::FrameError;

/// Source labels emitted by [`RuleTagger`].
pub const RULE_TAGGER_LABELS: [&str; 21] = [
    "O",
    "B-ARG0",
    "I-ARG0",
    "B-Verb",
    "I-Verb",
    "B-ARG1",
    "I-ARG1",
    "B-ARG2",
    "I-ARG2",
    "B-ARGM-LOC",
    "I-ARGM-LOC",
    "B-ARGM-TMP",
    "I-ARGM-TMP",
    "B-ARGM-DIR",
    "I-ARGM-DIR",
    "B-ARGM-MNR",
    "I-ARGM-MNR",
    "B-ARGM-EXT",
    "I-ARGM-EXT",
    "B-ARGM-PRP",
    "I-ARGM-PRP",
];

const DEFAULT_PAIRS: [(&str, &str); 9] = [
    ("Verb", "Action"),
    ("ARG1", "Receiver"),
    ("ARG2", "Tool"),
    ("ARGM-LOC", "Location"),
    ("ARGM-TMP", "Temporal"),
    ("ARGM-DIR", "Direction"),
    ("ARGM-MNR", "Manner"),
    ("ARGM-EXT", "Extent"),
    ("ARGM-PRP", "Purpose"),
];

/// Expert mapping from [`RULE_TAGGER_LABELS`] to frame labels. `ARG0` (the
/// speaker) stays unmapped.
pub fn default_mapping() -> LabelMapping {
    let sources: Vec<String> = RULE_TAGGER_LABELS.iter().map(|s| s.to_string()).collect();
    let pairs: Vec<(String, String)> = DEFAULT_PAIRS
        .iter()
        .flat_map(|(s, t)| ["B", "I"].map(|k| (format!("{k}-{s}"), format!("{k}-{t}"))))
        .collect();
    build_mapping(&sources, &pairs).expect("default mapping is well-formed")
}

/// Output of a base tagger for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTagging {
    pub tokens: Vec<String>,
    pub source_tags: Vec<String>,
    /// Per-token scores over the source labels; one-hot tags are used when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<Vec<f64>>>,
}

pub trait BaseTagger {
    fn source_labels(&self) -> Vec<String>;
    fn tag(&self, text: &str) -> SourceTagging;
}

/// One line of the pre-tagged JSONL ingest format.
pub type PreTaggedSentence = SourceTagging;

pub fn parse_pretagged_jsonl(input: &str) -> Result<Vec<PreTaggedSentence>, FrameError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let sentence: PreTaggedSentence =
                serde_json::from_str(line).map_err(|e| FrameError::PreTagged { line: i + 1, message: e.to_string() })?;
            if sentence.tokens.len() != sentence.source_tags.len() {
                return Err(FrameError::PreTagged {
                    line: i + 1,
                    message: format!("{} tokens but {} tags", sentence.tokens.len(), sentence.source_tags.len()),
                });
            }
            if let Some(scores) = &sentence.scores {
                if scores.len() != sentence.tokens.len() {
                    return Err(FrameError::PreTagged {
                        line: i + 1,
                        message: format!("{} tokens but {} score rows", sentence.tokens.len(), scores.len()),
                    });
                }
            }
            Ok(sentence)
        })
        .collect()
}

/// Splits on whitespace and peels punctuation off word edges into separate
/// tokens. Inner apostrophes and hyphens stay.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| c.is_alphanumeric()).unwrap_or(chars.len());
        let end = chars.iter().rposition(|c| c.is_alphanumeric()).map_or(start, |e| e + 1);
        tokens.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            tokens.push(chars[start..end].iter().collect());
        }
        tokens.extend(chars[end.max(start)..].iter().map(|c| c.to_string()));
    }
    tokens
}

const VERBS: &[&str] = &[
    "add", "adjust", "apply", "attach", "bake", "beat", "blend", "boil", "break", "bring", "brush", "check",
    "chop", "clean", "close", "combine", "connect", "cook", "cool", "cover", "crack", "cut", "dice", "dig",
    "dip", "drain", "drizzle", "dry", "fill", "flip", "fold", "fry", "grate", "grind", "heat", "hold", "insert",
    "jack", "knead", "lift", "loosen", "lower", "measure", "melt", "mince", "mix", "open", "peel", "place",
    "plant", "pour", "press", "pull", "push", "put", "raise", "remove", "repot", "replace", "rinse", "roll",
    "rotate", "rub", "scoop", "scrape", "screw", "season", "serve", "set", "shake", "simmer", "slice", "soak", "soften",
    "spread", "sprinkle", "squeeze", "start", "stir", "strain", "take", "tighten", "toss", "transfer", "turn",
    "twist", "unscrew", "wait", "wash", "water", "whisk", "wipe", "wrap",
];

const SUBJECTS: &[&str] = &["i", "you", "we", "he", "she", "they"];
const DETERMINERS: &[&str] = &["the", "a", "an", "some", "my", "your", "our", "this", "that", "these", "those"];
const BREAKS: &[&str] = &["and", "then", "or", "but", "so"];
const MANNER_WORDS: &[&str] = &["gently", "slowly", "quickly", "carefully", "firmly", "lightly", "thoroughly", "evenly"];
const SKIP_LY: &[&str] = &["only", "early", "really", "finally", "actually", "usually", "likely"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Arg1,
    Arg2,
    Loc,
    Tmp,
    Dir,
    Mnr,
    Ext,
    Prp,
}

impl Role {
    fn label(self) -> &'static str {
        match self {
            Role::Arg1 => "ARG1",
            Role::Arg2 => "ARG2",
            Role::Loc => "ARGM-LOC",
            Role::Tmp => "ARGM-TMP",
            Role::Dir => "ARGM-DIR",
            Role::Mnr => "ARGM-MNR",
            Role::Ext => "ARGM-EXT",
            Role::Prp => "ARGM-PRP",
        }
    }

    /// Clause-like roles run until a break and may contain verbs.
    fn is_clausal(self) -> bool {
        matches!(self, Role::Ext | Role::Prp | Role::Tmp)
    }
}

fn trigger(word: &str) -> Option<Role> {
    Some(match word {
        "with" | "using" => Role::Arg2,
        "until" | "till" => Role::Ext,
        "in" | "on" | "at" | "inside" | "over" | "under" | "beside" => Role::Loc,
        "into" | "onto" | "toward" | "towards" | "through" | "across" => Role::Dir,
        "after" | "before" | "while" | "when" | "during" => Role::Tmp,
        _ => return None,
    })
}

fn is_verb(word: &str) -> bool {
    if VERBS.contains(&word) {
        return true;
    }
    let stems = [
        word.strip_suffix("ing"),
        word.strip_suffix("ing").map(|s| format!("{s}e")).as_deref().and_then(|s| VERBS.iter().find(|v| **v == s).copied()),
        word.strip_suffix("es"),
        word.strip_suffix('s'),
        word.strip_suffix("ed"),
        word.strip_suffix('d'),
    ];
    stems.into_iter().flatten().any(|stem| {
        if VERBS.contains(&stem) {
            return true;
        }
        // chopping -> chopp -> chop
        let mut chars = stem.chars().rev();
        matches!((chars.next(), chars.next()), (Some(a), Some(b)) if a == b)
            && VERBS.contains(&&stem[..stem.len() - 1])
    })
}

fn is_punct(token: &str) -> bool {
    token.chars().all(|c| !c.is_alphanumeric())
}

/// Lexicon-and-trigger tagger for imperative and first-person narrations.
///
/// Lexicon verbs become `Verb`; the noun chunk right after a verb is
/// `ARG1`; `with`/`using` introduce `ARG2`; `until` introduces `ARGM-EXT`;
/// locative, directional and temporal prepositions introduce their
/// modifiers; `to` before a verb and `for` before a non-number introduce
/// `ARGM-PRP`; manner adverbs are `ARGM-MNR`; subject pronouns are `ARG0`.
/// Trigger words themselves are `O`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTagger;

impl BaseTagger for RuleTagger {
    fn source_labels(&self) -> Vec<String> {
        RULE_TAGGER_LABELS.iter().map(|s| s.to_string()).collect()
    }

    fn tag(&self, text: &str) -> SourceTagging {
        let tokens = tokenize(text);
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut tags = Vec::with_capacity(tokens.len());
        let mut role: Option<Role> = None;
        let mut started = false;

        for (i, word) in lower.iter().enumerate() {
            let next = lower.get(i + 1).map(String::as_str);
            let clausal = role.is_some_and(Role::is_clausal) && started;
            // A lexicon word opening a chunk or following a determiner is a noun.
            let noun_position = (role.is_some() && !started)
                || i.checked_sub(1).is_some_and(|p| DETERMINERS.contains(&lower[p].as_str()));

            let tag = if is_punct(word) || BREAKS.contains(&word.as_str()) {
                role = None;
                "O".to_string()
            } else if word == "to" && next.is_some_and(is_verb) {
                role = Some(Role::Prp);
                started = false;
                "O".to_string()
            } else if word == "for" {
                role = Some(if next.is_some_and(|n| n.chars().all(|c| c.is_ascii_digit())) {
                    Role::Tmp
                } else {
                    Role::Prp
                });
                started = false;
                "O".to_string()
            } else if word == "to" {
                role = Some(Role::Dir);
                started = false;
                "O".to_string()
            } else if let Some(r) = trigger(word) {
                role = Some(r);
                started = false;
                "O".to_string()
            } else if !clausal && !noun_position && is_verb(word) {
                role = Some(Role::Arg1);
                started = false;
                "B-Verb".to_string()
            } else if role.is_none() && SUBJECTS.contains(&word.as_str()) {
                "B-ARG0".to_string()
            } else if (role.is_none() || (role == Some(Role::Arg1) && !started))
                && (MANNER_WORDS.contains(&word.as_str())
                    || (word.len() > 4 && word.ends_with("ly") && !SKIP_LY.contains(&word.as_str())))
            {
                format!("B-{}", Role::Mnr.label())
            } else if let Some(r) = role {
                let prefix = if started { "I" } else { "B" };
                started = true;
                format!("{prefix}-{}", r.label())
            } else {
                "O".to_string()
            };
            tags.push(tag);
        }
        SourceTagging { tokens, source_tags: tags, scores: None }
    }
}
