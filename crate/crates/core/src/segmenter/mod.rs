//! Online action segmentation with a multi-stage causal temporal
//! convolutional network.
//!
//! Every stage is a 1×1 input projection, `L` residual layers of dilated
//! causal convolution (dilation `2^l`, left padding only) followed by ReLU
//! and a 1×1 convolution, and a 1×1 projection to class logits. The first
//! stage reads frame features; later stages read the previous stage's
//! per-frame class probabilities.
//!
//! Parameters live in one flat `f64` vector whose values are always exactly
//! representable as `f32`, so checkpoints round-trip bit for bit.

mod checkpoint;
mod kernels;
mod online;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader};
pub use online::{FramePrediction, OnlineSegmenter};
pub use train::{frame_accuracy, loss, loss_and_gradient, train, Sequence, TrainReport};

use kernels::{dense_row, dilated_row, relu, softmax};

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected {expected} labels, found {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("parameter vector has {found} values, config needs {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("non-finite parameter at {0}")]
    NonFiniteParam(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTcnConfig {
    pub num_stages: usize,
    pub layers_per_stage: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub kernel_size: usize,
    /// Weight of the truncated smoothing term.
    pub smoothing_weight: f64,
    /// Clip applied to per-frame log-probability differences.
    pub smoothing_clip: f64,
}

impl CausalTcnConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        CausalTcnConfig {
            num_stages: 2,
            layers_per_stage: 8,
            hidden_dim: 64,
            input_dim,
            num_classes,
            kernel_size: 3,
            smoothing_weight: 0.15,
            smoothing_clip: 4.0,
        }
    }

    pub fn validate(&self) -> Result<(), SegmenterError> {
        let fields = [
            ("num_stages", self.num_stages),
            ("layers_per_stage", self.layers_per_stage),
            ("hidden_dim", self.hidden_dim),
            ("input_dim", self.input_dim),
            ("num_classes", self.num_classes),
            ("kernel_size", self.kernel_size),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(SegmenterError::Config(format!("{name} must be positive")));
        }
        if self.layers_per_stage > 32 {
            return Err(SegmenterError::Config("layers_per_stage must be at most 32".into()));
        }
        if !(self.smoothing_weight >= 0.0 && self.smoothing_weight.is_finite()) {
            return Err(SegmenterError::Config("smoothing_weight must be finite and non-negative".into()));
        }
        if !(self.smoothing_clip > 0.0 && self.smoothing_clip.is_finite()) {
            return Err(SegmenterError::Config("smoothing_clip must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.layers_per_stage).map(|l| 1usize << l).collect()
    }

    /// Frames of history one stage can see, including the current one.
    pub fn stage_receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations().iter().sum::<usize>()
    }

    fn stage_input_dim(&self, stage: usize) -> usize {
        if stage == 0 {
            self.input_dim
        } else {
            self.num_classes
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerOffsets {
    pub dilation: usize,
    pub dil_w: usize,
    pub dil_b: usize,
    pub res_w: usize,
    pub res_b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct StageOffsets {
    pub in_dim: usize,
    pub in_w: usize,
    pub in_b: usize,
    pub layers: Vec<LayerOffsets>,
    pub out_w: usize,
    pub out_b: usize,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub stages: Vec<StageOffsets>,
    pub len: usize,
}

impl Layout {
    pub fn new(config: &CausalTcnConfig) -> Self {
        let (d, c, k) = (config.hidden_dim, config.num_classes, config.kernel_size);
        let mut cursor = 0usize;
        let mut take = |n: usize| {
            let at = cursor;
            cursor += n;
            at
        };
        let stages = (0..config.num_stages)
            .map(|s| {
                let in_dim = config.stage_input_dim(s);
                let in_w = take(d * in_dim);
                let in_b = take(d);
                let layers = config
                    .dilations()
                    .into_iter()
                    .map(|dilation| LayerOffsets {
                        dilation,
                        dil_w: take(k * d * d),
                        dil_b: take(d),
                        res_w: take(d * d),
                        res_b: take(d),
                    })
                    .collect();
                let out_w = take(c * d);
                let out_b = take(c);
                StageOffsets { in_dim, in_w, in_b, layers, out_w, out_b }
            })
            .collect();
        Layout { stages, len: cursor }
    }
}

/// A multi-stage causal TCN with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalTcnModel {
    config: CausalTcnConfig,
    seed: u64,
    params: Vec<f64>,
}

impl CausalTcnModel {
    /// Seeded initialization, uniform in ±1/√fan_in for weights and biases.
    pub fn init(config: CausalTcnConfig, seed: u64) -> Result<Self, SegmenterError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0f64; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, c, k) = (config.hidden_dim, config.num_classes, config.kernel_size);
        let mut fill = |start: usize, len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = f64::from(rng.random_range(-bound..bound) as f32);
            }
        };
        for stage in &layout.stages {
            fill(stage.in_w, d * stage.in_dim, stage.in_dim);
            fill(stage.in_b, d, stage.in_dim);
            for layer in &stage.layers {
                fill(layer.dil_w, k * d * d, k * d);
                fill(layer.dil_b, d, k * d);
                fill(layer.res_w, d * d, d);
                fill(layer.res_b, d, d);
            }
            fill(stage.out_w, c * d, d);
            fill(stage.out_b, c, d);
        }
        Ok(CausalTcnModel { config, seed, params })
    }

    pub fn from_parameters(config: CausalTcnConfig, seed: u64, params: &[f32]) -> Result<Self, SegmenterError> {
        config.validate()?;
        let expected = Layout::new(&config).len;
        if params.len() != expected {
            return Err(SegmenterError::ParamCount { expected, found: params.len() });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(SegmenterError::NonFiniteParam(i));
        }
        Ok(CausalTcnModel { config, seed, params: params.iter().map(|p| f64::from(*p)).collect() })
    }

    pub fn config(&self) -> &CausalTcnConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Per-stage logits, each `T × num_classes` (row-major rows).
    pub fn forward(&self, features: &[Vec<f32>]) -> Result<Vec<Vec<Vec<f64>>>, SegmenterError> {
        let input = flatten_features(features, self.config.input_dim)?;
        let caches = forward_cached(&self.config, &self.layout(), &self.params, &input, features.len());
        let c = self.config.num_classes;
        Ok(caches
            .into_iter()
            .map(|cache| cache.logits.chunks(c).map(<[f64]>::to_vec).collect())
            .collect())
    }

    /// Last-stage class probabilities and argmax per frame.
    pub fn predict_proba(&self, features: &[Vec<f32>]) -> Result<Vec<FramePrediction>, SegmenterError> {
        let logits = self.forward(features)?;
        Ok(logits
            .last()
            .expect("at least one stage")
            .iter()
            .map(|row| {
                let mut probabilities = vec![0f64; row.len()];
                kernels::softmax(row, &mut probabilities);
                FramePrediction { label: argmax(&probabilities), probabilities }
            })
            .collect())
    }

    /// Last-stage argmax per frame.
    pub fn predict(&self, features: &[Vec<f32>]) -> Result<Vec<usize>, SegmenterError> {
        let logits = self.forward(features)?;
        Ok(logits.last().expect("at least one stage").iter().map(|row| argmax(row)).collect())
    }
}

pub(crate) fn flatten_features(features: &[Vec<f32>], dim: usize) -> Result<Vec<f64>, SegmenterError> {
    if features.is_empty() {
        return Err(SegmenterError::EmptySequence);
    }
    let mut flat = Vec::with_capacity(features.len() * dim);
    for row in features {
        if row.len() != dim {
            return Err(SegmenterError::DimMismatch { expected: dim, found: row.len() });
        }
        flat.extend(row.iter().map(|x| f64::from(*x)));
    }
    Ok(flat)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Activations of one stage kept for backpropagation.
pub(crate) struct StageCache {
    pub input: Vec<f64>,
    /// `h[l]` is the input of layer `l`; `h[L]` feeds the output projection.
    pub h: Vec<Vec<f64>>,
    /// Pre-activation of each dilated convolution.
    pub a: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

pub(crate) fn forward_cached(
    config: &CausalTcnConfig,
    layout: &Layout,
    params: &[f64],
    input: &[f64],
    frames: usize,
) -> Vec<StageCache> {
    let (d, c, k) = (config.hidden_dim, config.num_classes, config.kernel_size);
    let mut caches: Vec<StageCache> = Vec::with_capacity(layout.stages.len());
    for stage in &layout.stages {
        let input = match caches.last() {
            Some(prev) => prev.probs.clone(),
            None => input.to_vec(),
        };
        let din = stage.in_dim;
        let mut h0 = vec![0f64; frames * d];
        for t in 0..frames {
            dense_row(
                &params[stage.in_w..stage.in_w + d * din],
                &params[stage.in_b..stage.in_b + d],
                &input[t * din..(t + 1) * din],
                &mut h0[t * d..(t + 1) * d],
            );
        }
        let mut h = vec![h0];
        let mut a_all = Vec::with_capacity(stage.layers.len());
        let mut r = vec![0f64; d];
        let mut z = vec![0f64; d];
        for layer in &stage.layers {
            let cur = h.last().expect("h0 present");
            let mut a = vec![0f64; frames * d];
            let mut next = vec![0f64; frames * d];
            for t in 0..frames {
                let taps: Vec<Option<&[f64]>> = (0..k)
                    .map(|j| {
                        t.checked_sub(j * layer.dilation)
                            .map(|src| &cur[src * d..(src + 1) * d])
                    })
                    .collect();
                let a_row = &mut a[t * d..(t + 1) * d];
                dilated_row(
                    &params[layer.dil_w..layer.dil_w + k * d * d],
                    &params[layer.dil_b..layer.dil_b + d],
                    &taps,
                    a_row,
                );
                relu(a_row, &mut r);
                dense_row(&params[layer.res_w..layer.res_w + d * d], &params[layer.res_b..layer.res_b + d], &r, &mut z);
                for ((n, x), dz) in next[t * d..(t + 1) * d].iter_mut().zip(&cur[t * d..(t + 1) * d]).zip(&z) {
                    *n = x + dz;
                }
            }
            a_all.push(a);
            h.push(next);
        }
        let last = h.last().expect("h present");
        let mut logits = vec![0f64; frames * c];
        let mut probs = vec![0f64; frames * c];
        for t in 0..frames {
            dense_row(
                &params[stage.out_w..stage.out_w + c * d],
                &params[stage.out_b..stage.out_b + c],
                &last[t * d..(t + 1) * d],
                &mut logits[t * c..(t + 1) * c],
            );
            softmax(&logits[t * c..(t + 1) * c], &mut probs[t * c..(t + 1) * c]);
        }
        caches.push(StageCache { input, h, a: a_all, logits, probs });
    }
    caches
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn random_features(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> Vec<Vec<f32>> {
        (0..frames).map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect()
    }

    fn small_config() -> CausalTcnConfig {
        CausalTcnConfig { num_stages: 2, layers_per_stage: 3, hidden_dim: 5, ..CausalTcnConfig::new(4, 3) }
    }

    #[test]
    fn receptive_field_closed_form() {
        let config = CausalTcnConfig { layers_per_stage: 10, ..CausalTcnConfig::new(4, 3) };
        assert_eq!(config.stage_receptive_field(), 2047);
        assert_eq!(config.stage_receptive_field(), 1 + 2 * ((1 << 10) - 1));
        let config = CausalTcnConfig { layers_per_stage: 4, ..CausalTcnConfig::new(4, 3) };
        assert_eq!(config.dilations(), vec![1, 2, 4, 8]);
    }

    #[test]
    fn config_validation() {
        assert!(CausalTcnConfig { hidden_dim: 0, ..CausalTcnConfig::new(4, 3) }.validate().is_err());
        assert!(CausalTcnConfig { smoothing_clip: 0.0, ..CausalTcnConfig::new(4, 3) }.validate().is_err());
        assert!(CausalTcnConfig::new(4, 3).validate().is_ok());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = CausalTcnModel::init(small_config(), 3).unwrap();
        let b = CausalTcnModel::init(small_config(), 3).unwrap();
        let c = CausalTcnModel::init(small_config(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        assert!(a.params().iter().all(|p| p.abs() <= 1.0 && f64::from(*p as f32) == *p));
    }

    #[test]
    fn single_frame_has_logits_per_stage() {
        let model = CausalTcnModel::init(small_config(), 1).unwrap();
        let logits = model.forward(&[vec![0.5, -0.2, 0.1, 0.0]]).unwrap();
        assert_eq!(logits.len(), 2);
        assert!(logits.iter().all(|s| s.len() == 1 && s[0].len() == 3));
        assert!(logits.iter().flatten().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn future_perturbation_leaves_past_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = CausalTcnModel::init(small_config(), 2).unwrap();
        let features = random_features(&mut rng, 12, 4);
        let base = model.forward(&features).unwrap();
        let mut perturbed = features.clone();
        for row in &mut perturbed[6..] {
            for x in row.iter_mut() {
                *x += 3.0;
            }
        }
        let after = model.forward(&perturbed).unwrap();
        for (s, (b, a)) in base.iter().zip(&after).enumerate() {
            for t in 0..6 {
                let bits = |row: &[f64]| row.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&b[t]), bits(&a[t]), "stage {s} frame {t}");
            }
            assert_ne!(b[6], a[6]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = CausalTcnModel::init(small_config(), 1).unwrap();
        assert!(matches!(model.forward(&[]), Err(SegmenterError::EmptySequence)));
        assert!(matches!(model.forward(&[vec![1.0]]), Err(SegmenterError::DimMismatch { .. })));
        assert!(matches!(
            CausalTcnModel::from_parameters(small_config(), 0, &[0.0; 3]),
            Err(SegmenterError::ParamCount { .. })
        ));
    }
}
