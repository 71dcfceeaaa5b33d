use std::collections::HashMap;

use super::{parse_bio, FrameError, TargetLabel, TARGET_LABEL_COUNT};

/// Linear layer from source BIO labels to frame BIO labels.
///
/// Built from expert `(source, target)` pairs: the weight is 1 at every
/// declared cell, unmapped source labels go to `O`, everything else is 0.
/// Weights are real-valued so they can be adjusted afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMapping {
    source_labels: Vec<String>,
    source_index: HashMap<String, usize>,
    /// Row-major `TARGET_LABEL_COUNT × source_labels.len()`.
    matrix: Vec<f64>,
    assignment: Vec<TargetLabel>,
}

/// Builds the initial mapping matrix over the declared `source_labels`.
pub fn build_mapping(source_labels: &[String], pairs: &[(String, String)]) -> Result<LabelMapping, FrameError> {
    let mut source_index = HashMap::with_capacity(source_labels.len());
    for (i, label) in source_labels.iter().enumerate() {
        parse_bio(label)?;
        if source_index.insert(label.clone(), i).is_some() {
            return Err(FrameError::DuplicateSourceLabel(label.clone()));
        }
    }

    let mut declared: Vec<Option<TargetLabel>> = vec![None; source_labels.len()];
    for (source, target) in pairs {
        let &col = source_index.get(source).ok_or_else(|| FrameError::UnknownSourceLabel(source.clone()))?;
        let target_label: TargetLabel = target.parse()?;
        let (source_kind, _) = parse_bio(source)?;
        if source_kind != target_label.kind() {
            return Err(FrameError::BioKindMismatch { source_label: source.clone(), target: target.clone() });
        }
        match declared[col] {
            Some(existing) if existing != target_label => {
                return Err(FrameError::ConflictingMapping {
                    source_label: source.clone(),
                    first: existing.to_string(),
                    second: target.clone(),
                })
            }
            _ => declared[col] = Some(target_label),
        }
    }

    let assignment: Vec<TargetLabel> = declared.into_iter().map(|t| t.unwrap_or(TargetLabel::O)).collect();
    let cols = source_labels.len();
    let mut matrix = vec![0f64; TARGET_LABEL_COUNT * cols];
    for (col, target) in assignment.iter().enumerate() {
        matrix[target.index() * cols + col] = 1.0;
    }
    Ok(LabelMapping { source_labels: source_labels.to_vec(), source_index, matrix, assignment })
}

impl LabelMapping {
    pub fn source_labels(&self) -> &[String] {
        &self.source_labels
    }

    pub fn target_labels(&self) -> Vec<TargetLabel> {
        TargetLabel::all()
    }

    pub fn weight(&self, target: TargetLabel, source: usize) -> f64 {
        self.matrix[target.index() * self.source_labels.len() + source]
    }

    pub fn set_weight(&mut self, target: TargetLabel, source: usize, value: f64) {
        let cols = self.source_labels.len();
        self.matrix[target.index() * cols + source] = value;
    }

    /// Target label each source label was initialized to.
    pub fn initial_target(&self, source_label: &str) -> Option<TargetLabel> {
        self.source_index.get(source_label).map(|&i| self.assignment[i])
    }

    pub fn source_position(&self, label: &str) -> Result<usize, FrameError> {
        self.source_index.get(label).copied().ok_or_else(|| FrameError::UnknownSourceLabel(label.to_string()))
    }

    /// One-hot score rows for a tag sequence.
    pub fn one_hot(&self, tags: &[String]) -> Result<Vec<Vec<f64>>, FrameError> {
        tags.iter()
            .map(|tag| {
                let mut row = vec![0f64; self.source_labels.len()];
                row[self.source_position(tag)?] = 1.0;
                Ok(row)
            })
            .collect()
    }

    /// `target = matrix · source` for every token row.
    pub fn apply(&self, source_scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FrameError> {
        let cols = self.source_labels.len();
        source_scores
            .iter()
            .map(|row| {
                if row.len() != cols {
                    return Err(FrameError::DimMismatch { expected: cols, found: row.len() });
                }
                Ok((0..TARGET_LABEL_COUNT)
                    .map(|r| self.matrix[r * cols..(r + 1) * cols].iter().zip(row).map(|(w, x)| w * x).sum())
                    .collect())
            })
            .collect()
    }
}
