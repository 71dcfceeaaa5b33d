//! Online estimation of the spec item currently being performed.
//!
//! Each incoming frame vector is scored against every spec-item vector by
//! cosine similarity. The estimate is the item with the highest mean
//! similarity over the frames in the trailing window `(t - window_ms, t]`,
//! ties going to the lowest item index.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::TextEncoder;
use crate::model::{Spec, TranscriptChunk};

/// Default aggregation window.
pub const DEFAULT_WINDOW_MS: u64 = 6000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("out-of-order timestamp: {t_ms} ms is not after {newest} ms")]
    OutOfOrder { t_ms: u64, newest: u64 },
    #[error("expected {expected} item vectors, got {found}")]
    ItemCount { expected: usize, found: usize },
    #[error("window must be positive")]
    ZeroWindow,
    #[error("no frames observed")]
    EmptyHistory,
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::DimMismatch { left: a.len(), right: b.len() });
    }
    let (mut dot, mut aa, mut bb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub item: usize,
    pub score: f64,
    pub scores: Vec<f64>,
}

/// Column means of the rows, then argmax with lowest-index tie-break.
/// Rows are summed in the order given.
pub fn aggregate<'a>(rows: impl IntoIterator<Item = &'a [f64]>, items: usize) -> Option<Estimate> {
    let mut sums = vec![0f64; items];
    let mut count = 0usize;
    for row in rows {
        for (sum, s) in sums.iter_mut().zip(row) {
            *sum += s;
        }
        count += 1;
    }
    if count == 0 || items == 0 {
        return None;
    }
    let scores: Vec<f64> = sums.into_iter().map(|s| s / count as f64).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Some(Estimate { item: best, score: scores[best], scores })
}

/// Per-session retrieval state.
#[derive(Debug, Clone)]
pub struct MatchState {
    spec: Arc<Spec>,
    item_vectors: Vec<Vec<f32>>,
    dim: usize,
    window_ms: u64,
    history: VecDeque<(u64, Vec<f64>)>,
    newest: Option<u64>,
    last_estimate: Option<Estimate>,
}

impl MatchState {
    pub fn new(spec: Arc<Spec>, item_vectors: Vec<Vec<f32>>, window_ms: u64) -> Result<Self, MatchError> {
        if window_ms == 0 {
            return Err(MatchError::ZeroWindow);
        }
        if item_vectors.len() != spec.len() {
            return Err(MatchError::ItemCount { expected: spec.len(), found: item_vectors.len() });
        }
        let dim = item_vectors[0].len();
        if let Some(bad) = item_vectors.iter().find(|v| v.len() != dim) {
            return Err(MatchError::DimMismatch { left: dim, right: bad.len() });
        }
        Ok(MatchState {
            spec,
            item_vectors,
            dim,
            window_ms,
            history: VecDeque::new(),
            newest: None,
            last_estimate: None,
        })
    }

    /// Embeds each spec item's text with `encoder`.
    pub fn from_encoder(spec: Arc<Spec>, encoder: &dyn TextEncoder, window_ms: u64) -> Result<Self, MatchError> {
        let vectors = item_vectors(&spec, encoder);
        Self::new(spec, vectors, window_ms)
    }

    pub fn spec(&self) -> &Arc<Spec> {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    pub fn item_vectors(&self) -> &[Vec<f32>] {
        &self.item_vectors
    }

    /// Retained `(timestamp, similarity row)` entries, oldest first.
    pub fn history(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.history.iter().map(|(t, row)| (*t, row.as_slice()))
    }

    pub fn last_estimate(&self) -> Option<&Estimate> {
        self.last_estimate.as_ref()
    }

    /// Scores `vector` against every item, slides the window to end at
    /// `t_ms` and recomputes the estimate.
    pub fn observe_frame(&mut self, t_ms: u64, vector: &[f32]) -> Result<&Estimate, MatchError> {
        if vector.len() != self.dim {
            return Err(MatchError::DimMismatch { left: self.dim, right: vector.len() });
        }
        if let Some(newest) = self.newest {
            if t_ms <= newest {
                return Err(MatchError::OutOfOrder { t_ms, newest });
            }
        }
        let row = self
            .item_vectors
            .iter()
            .map(|item| cosine_similarity(vector, item))
            .collect::<Result<Vec<_>, _>>()?;
        self.history.push_back((t_ms, row));
        self.newest = Some(t_ms);
        self.evict(t_ms);
        self.last_estimate = Some(self.estimate_item()?);
        Ok(self.last_estimate.as_ref().expect("just set"))
    }

    fn evict(&mut self, t_ms: u64) {
        while let Some((oldest, _)) = self.history.front() {
            if oldest + self.window_ms <= t_ms {
                self.history.pop_front();
            } else {
                break;
            }
        }
    }

    /// Slides the window to end at `t_ms` without a new frame and returns
    /// the estimate over what remains.
    pub fn estimate_at(&mut self, t_ms: u64) -> Result<Estimate, MatchError> {
        if let Some(newest) = self.newest {
            if t_ms < newest {
                return Err(MatchError::OutOfOrder { t_ms, newest });
            }
        }
        self.evict(t_ms);
        self.estimate_item()
    }

    pub fn estimate_item(&self) -> Result<Estimate, MatchError> {
        aggregate(self.history.iter().map(|(_, row)| row.as_slice()), self.item_vectors.len())
            .ok_or(MatchError::EmptyHistory)
    }
}

pub fn item_vectors(spec: &Spec, encoder: &dyn TextEncoder) -> Vec<Vec<f32>> {
    spec.items().iter().map(|item| encoder.embed(&item.text).vector).collect()
}

/// Best-matching spec item for each transcript chunk; `None` for blank
/// chunks.
pub fn match_from_transcripts(
    spec: &Spec,
    chunks: &[TranscriptChunk],
    encoder: &dyn TextEncoder,
) -> Vec<Option<usize>> {
    let items = item_vectors(spec, encoder);
    chunks
        .iter()
        .map(|chunk| {
            let embedding = encoder.embed(&chunk.text);
            if embedding.empty {
                return None;
            }
            let row: Vec<f64> = items
                .iter()
                .map(|item| cosine_similarity(&embedding.vector, item).expect("encoder dims agree"))
                .collect();
            aggregate([row.as_slice()], row.len()).map(|e| e.item)
        })
        .collect()
}
