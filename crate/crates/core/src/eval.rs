//! Offline retrieval evaluation: ROUGE-1/2/L and accuracy of windowed spec
//! item estimates sampled at a fixed cadence over annotated streams.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::TextEncoder;
use crate::matcher::{match_from_transcripts, MatchError, MatchState};
use crate::model::{EmbeddingStream, Spec, TranscriptChunk};

/// Recorded in every report so scores can be compared with other tools.
pub const TOKENIZATION: &str = "lowercase; split on every non-alphanumeric character; no stemming; no stopword removal";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold segment {index}: {message}")]
    Gold { index: usize, message: String },
    #[error("cadence must be positive")]
    ZeroCadence,
    #[error("invalid gold JSON: {0}")]
    GoldJson(#[from] serde_json::Error),
    #[error(transparent)]
    Match(#[from] MatchError),
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        if overlap == 0 || candidate == 0 || reference == 0 {
            return RougeScore::default();
        }
        let precision = overlap as f64 / candidate as f64;
        let recall = overlap as f64 / reference as f64;
        RougeScore { precision, recall, f1: 2.0 * precision * recall / (precision + recall) }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. `n = 0` scores zero.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand.iter().map(|(gram, c)| (*c).min(refs.get(gram).copied().unwrap_or(0))).sum();
    RougeScore::from_counts(overlap, cand.values().sum(), refs.values().sum())
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSegment {
    pub start_ms: u64,
    pub end_ms: u64,
    pub item: usize,
}

pub fn parse_gold(bytes: &[u8]) -> Result<Vec<GoldSegment>, EvalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Segments must be sorted and non-overlapping; adjacent segments may share
/// a boundary.
pub fn validate_gold(gold: &[GoldSegment], items: usize) -> Result<(), EvalError> {
    for (index, seg) in gold.iter().enumerate() {
        let fail = |message: String| Err(EvalError::Gold { index, message });
        if seg.end_ms < seg.start_ms {
            return fail(format!("end {} before start {}", seg.end_ms, seg.start_ms));
        }
        if seg.item >= items {
            return fail(format!("item {} out of range for {items} items", seg.item));
        }
        if index > 0 && seg.start_ms < gold[index - 1].end_ms {
            return fail("overlaps the previous segment".into());
        }
    }
    Ok(())
}

/// Gold item at `t_ms`; a tick on a shared boundary belongs to the later
/// segment.
pub fn gold_item_at(gold: &[GoldSegment], t_ms: u64) -> Option<usize> {
    gold.iter().rev().find(|s| s.start_ms <= t_ms && t_ms <= s.end_ms).map(|s| s.item)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub accuracy: f64,
    pub ticks: usize,
    pub correct: usize,
    /// Ticks outside every gold segment.
    pub skipped_outside_gold: usize,
    /// Ticks with nothing inside the window.
    pub skipped_no_prediction: usize,
}

#[derive(Default)]
struct Accumulator {
    sums: [RougeScore; 3],
    scores: RetrievalScores,
}

impl Accumulator {
    fn tick(&mut self, spec: &Spec, predicted: Option<usize>, gold: Option<usize>, tokens: &[Vec<String>]) {
        let Some(gold) = gold else {
            self.scores.skipped_outside_gold += 1;
            return;
        };
        let Some(predicted) = predicted else {
            self.scores.skipped_no_prediction += 1;
            return;
        };
        debug_assert!(gold < spec.len());
        let (cand, refs) = (&tokens[predicted], &tokens[gold]);
        for (sum, s) in self.sums.iter_mut().zip([rouge_n(cand, refs, 1), rouge_n(cand, refs, 2), rouge_l(cand, refs)]) {
            sum.precision += s.precision;
            sum.recall += s.recall;
            sum.f1 += s.f1;
        }
        self.scores.ticks += 1;
        self.scores.correct += usize::from(predicted == gold);
    }

    fn finish(mut self) -> RetrievalScores {
        let n = self.scores.ticks;
        if n > 0 {
            let mean = |s: RougeScore| RougeScore {
                precision: s.precision / n as f64,
                recall: s.recall / n as f64,
                f1: s.f1 / n as f64,
            };
            self.scores.rouge1 = mean(self.sums[0]);
            self.scores.rouge2 = mean(self.sums[1]);
            self.scores.rouge_l = mean(self.sums[2]);
            self.scores.accuracy = self.scores.correct as f64 / n as f64;
        }
        self.scores
    }
}

fn item_tokens(spec: &Spec) -> Vec<Vec<String>> {
    spec.items().iter().map(|item| tokenize(&item.text)).collect()
}

/// Samples the windowed estimate every `cadence_ms`, starting at the first
/// frame timestamp and ending at the last one.
pub fn evaluate_retrieval(
    spec: &std::sync::Arc<Spec>,
    item_vectors: &[Vec<f32>],
    stream: &EmbeddingStream,
    gold: &[GoldSegment],
    window_ms: u64,
    cadence_ms: u64,
) -> Result<RetrievalScores, EvalError> {
    if cadence_ms == 0 {
        return Err(EvalError::ZeroCadence);
    }
    validate_gold(gold, spec.len())?;
    let mut state = MatchState::new(spec.clone(), item_vectors.to_vec(), window_ms)?;
    let entries = stream.entries();
    let tokens = item_tokens(spec);
    let mut acc = Accumulator::default();
    let (Some(first), Some(last)) = (entries.first(), entries.last()) else {
        return Ok(acc.finish());
    };
    let mut next = 0;
    let mut t = first.0;
    while t <= last.0 {
        while next < entries.len() && entries[next].0 <= t {
            state.observe_frame(entries[next].0, &entries[next].1)?;
            next += 1;
        }
        let predicted = match state.estimate_at(t) {
            Ok(estimate) => Some(estimate.item),
            Err(MatchError::EmptyHistory) => None,
            Err(e) => return Err(e.into()),
        };
        acc.tick(spec, predicted, gold_item_at(gold, t), &tokens);
        t += cadence_ms;
    }
    Ok(acc.finish())
}

/// Text-only baseline: each tick takes the best item for the transcript
/// chunk covering it.
pub fn evaluate_transcript_retrieval(
    spec: &Spec,
    chunks: &[TranscriptChunk],
    gold: &[GoldSegment],
    encoder: &dyn TextEncoder,
    cadence_ms: u64,
) -> Result<RetrievalScores, EvalError> {
    if cadence_ms == 0 {
        return Err(EvalError::ZeroCadence);
    }
    validate_gold(gold, spec.len())?;
    let tokens = item_tokens(spec);
    let matches = match_from_transcripts(spec, chunks, encoder);
    let mut acc = Accumulator::default();
    let (Some(start), Some(end)) = (chunks.iter().map(|c| c.start_ms).min(), chunks.iter().map(|c| c.end_ms).max()) else {
        return Ok(acc.finish());
    };
    let mut t = start;
    while t <= end {
        let covering = chunks
            .iter()
            .enumerate()
            .filter(|(_, c)| c.start_ms <= t && t <= c.end_ms)
            .max_by_key(|(i, c)| (c.start_ms, *i))
            .and_then(|(i, _)| matches[i]);
        acc.tick(spec, covering, gold_item_at(gold, t), &tokens);
        t += cadence_ms;
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub scores: RetrievalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tokenization: String,
    /// Table values are F1 (ROUGE) and accuracy, as percentages.
    pub table_metric: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Report { tokenization: TOKENIZATION.to_string(), table_metric: "ROUGE F1 x100, accuracy x100".into(), rows }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn report_table(rows: &[ReportRow]) -> String {
    let mut out = format!("{:<12} {:>7} {:>7} {:>7} {:>7}\n", "config", "R1", "R2", "RL", "Acc");
    for row in rows {
        let s = &row.scores;
        out.push_str(&format!(
            "{:<12} {:>7.2} {:>7.2} {:>7.2} {:>7.2}\n",
            row.config,
            100.0 * s.rouge1.f1,
            100.0 * s.rouge2.f1,
            100.0 * s.rouge_l.f1,
            100.0 * s.accuracy
        ));
    }
    out
}
