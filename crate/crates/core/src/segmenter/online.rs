use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kernels::{dense_row, dilated_row, relu, softmax};
use super::{argmax, CausalTcnModel, Layout, SegmenterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

/// Incremental inference: one frame in, one prediction out.
///
/// Each layer keeps only the `(k - 1) · dilation + 1` most recent inputs it
/// needs, so the per-frame cost is constant.
#[derive(Debug, Clone)]
pub struct OnlineSegmenter {
    model: Arc<CausalTcnModel>,
    layout: Layout,
    /// `history[stage][layer]`, newest last.
    history: Vec<Vec<VecDeque<Vec<f64>>>>,
    frames_seen: usize,
}

impl OnlineSegmenter {
    pub fn new(model: Arc<CausalTcnModel>) -> Self {
        let layout = model.layout();
        let history = layout
            .stages
            .iter()
            .map(|stage| stage.layers.iter().map(|_| VecDeque::new()).collect())
            .collect();
        OnlineSegmenter { model, layout, history, frames_seen: 0 }
    }

    pub fn model(&self) -> &Arc<CausalTcnModel> {
        &self.model
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn predict_online(&mut self, feature: &[f32]) -> Result<FramePrediction, SegmenterError> {
        let config = self.model.config();
        if feature.len() != config.input_dim {
            return Err(SegmenterError::DimMismatch { expected: config.input_dim, found: feature.len() });
        }
        let (d, c, k) = (config.hidden_dim, config.num_classes, config.kernel_size);
        let params = self.model.params();
        let mut input: Vec<f64> = feature.iter().map(|x| f64::from(*x)).collect();
        let mut probs = vec![0f64; c];
        let mut a = vec![0f64; d];
        let mut r = vec![0f64; d];
        let mut z = vec![0f64; d];

        for (stage, hist) in self.layout.stages.iter().zip(self.history.iter_mut()) {
            let din = stage.in_dim;
            let mut h = vec![0f64; d];
            dense_row(&params[stage.in_w..stage.in_w + d * din], &params[stage.in_b..stage.in_b + d], &input, &mut h);
            for (layer, buf) in stage.layers.iter().zip(hist.iter_mut()) {
                buf.push_back(h);
                let keep = (k - 1) * layer.dilation + 1;
                while buf.len() > keep {
                    buf.pop_front();
                }
                let newest = buf.len() - 1;
                let taps: Vec<Option<&[f64]>> = (0..k)
                    .map(|j| newest.checked_sub(j * layer.dilation).map(|i| buf[i].as_slice()))
                    .collect();
                dilated_row(&params[layer.dil_w..layer.dil_w + k * d * d], &params[layer.dil_b..layer.dil_b + d], &taps, &mut a);
                relu(&a, &mut r);
                dense_row(&params[layer.res_w..layer.res_w + d * d], &params[layer.res_b..layer.res_b + d], &r, &mut z);
                h = buf[newest].iter().zip(&z).map(|(x, dz)| x + dz).collect();
            }
            let mut logits = vec![0f64; c];
            dense_row(&params[stage.out_w..stage.out_w + c * d], &params[stage.out_b..stage.out_b + c], &h, &mut logits);
            softmax(&logits, &mut probs);
            input = probs.clone();
        }
        self.frames_seen += 1;
        Ok(FramePrediction { label: argmax(&probs), probabilities: probs })
    }
}
