use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::FrameError;
use crate::model::{SemanticFrame, SlotName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    /// Precision is undefined (nothing predicted) and reported as 0.
    pub zero_predictions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub per_slot: BTreeMap<SlotName, SlotScore>,
    /// Means over the slots that occur in the gold frames.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub averaged_slots: Vec<SlotName>,
}

/// Exact-span matching per sentence; spans count as multisets.
pub fn evaluate_frames(predicted: &[SemanticFrame], gold: &[SemanticFrame]) -> Result<FrameScores, FrameError> {
    if predicted.len() != gold.len() {
        return Err(FrameError::LengthMismatch(predicted.len(), gold.len()));
    }
    let mut counts: BTreeMap<SlotName, (usize, usize, usize)> = BTreeMap::new();
    let mut gold_slots = Vec::new();
    for (pred, gold) in predicted.iter().zip(gold) {
        for slot in SlotName::ALL {
            let (p, g) = (pred.spans(slot), gold.spans(slot));
            if p.is_empty() && g.is_empty() {
                continue;
            }
            if !g.is_empty() && !gold_slots.contains(&slot) {
                gold_slots.push(slot);
            }
            let mut remaining: HashMap<&str, usize> = HashMap::new();
            for span in g {
                *remaining.entry(span.as_str()).or_default() += 1;
            }
            let mut tp = 0;
            for span in p {
                if let Some(n) = remaining.get_mut(span.as_str()).filter(|n| **n > 0) {
                    *n -= 1;
                    tp += 1;
                }
            }
            let entry = counts.entry(slot).or_default();
            entry.0 += tp;
            entry.1 += p.len() - tp;
            entry.2 += g.len() - tp;
        }
    }
    gold_slots.sort();

    let per_slot: BTreeMap<SlotName, SlotScore> = counts
        .into_iter()
        .map(|(slot, (tp, fp, fn_))| {
            let predicted = tp + fp;
            let score = SlotScore {
                true_positives: tp,
                false_positives: fp,
                false_negatives: fn_,
                precision: if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 },
                recall: if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 },
                zero_predictions: predicted == 0,
            };
            (slot, score)
        })
        .collect();

    let mean = |f: fn(&SlotScore) -> f64| {
        if gold_slots.is_empty() {
            0.0
        } else {
            gold_slots.iter().map(|s| f(&per_slot[s])).sum::<f64>() / gold_slots.len() as f64
        }
    };
    Ok(FrameScores {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        per_slot,
        averaged_slots: gold_slots,
    })
}
