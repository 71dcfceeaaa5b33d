//! Loss, backpropagation and Adam training for the causal TCN.
//!
//! Per stage the loss is the mean frame cross-entropy plus
//! `λ · mean_{t≥1, c} min(τ², (log p[t, c] − log p[t−1, c])²)`, summed over
//! stages. The smoothing term is differentiated through both frames.

use super::kernels::log_softmax;
use super::{argmax, flatten_features, forward_cached, CausalTcnConfig, CausalTcnModel, Layout, SegmenterError, StageCache};

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss of the sequence used at each step, before that step's update.
    pub losses: Vec<f64>,
}

fn check_labels(labels: &[usize], frames: usize, classes: usize) -> Result<(), SegmenterError> {
    if labels.len() != frames {
        return Err(SegmenterError::LabelCount { expected: frames, found: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|l| **l >= classes) {
        return Err(SegmenterError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Loss of one stage and, optionally, its gradient w.r.t. the logits.
fn stage_loss(
    config: &CausalTcnConfig,
    logits: &[f64],
    labels: &[usize],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let c = config.num_classes;
    let frames = labels.len();
    let mut logp = vec![0f64; logits.len()];
    for t in 0..frames {
        log_softmax(&logits[t * c..(t + 1) * c], &mut logp[t * c..(t + 1) * c]);
    }

    let mut ce = 0f64;
    for (t, label) in labels.iter().enumerate() {
        ce -= logp[t * c + label];
    }
    ce /= frames as f64;

    // Gradient w.r.t. log-probabilities from the smoothing term.
    let mut g_logp = vec![0f64; logits.len()];
    let mut smooth = 0f64;
    if frames > 1 {
        let n = ((frames - 1) * c) as f64;
        let clip = config.smoothing_clip * config.smoothing_clip;
        for t in 1..frames {
            for k in 0..c {
                let delta = logp[t * c + k] - logp[(t - 1) * c + k];
                let sq = delta * delta;
                if sq < clip {
                    smooth += sq;
                    let g = config.smoothing_weight * 2.0 * delta / n;
                    g_logp[t * c + k] += g;
                    g_logp[(t - 1) * c + k] -= g;
                } else {
                    smooth += clip;
                }
            }
        }
        smooth /= n;
    }
    let total = ce + config.smoothing_weight * smooth;
    if !want_grad {
        return (total, None);
    }

    let mut grad = vec![0f64; logits.len()];
    for t in 0..frames {
        let row = t * c..(t + 1) * c;
        let g_sum: f64 = g_logp[row.clone()].iter().sum();
        for k in 0..c {
            let p = logp[t * c + k].exp();
            let onehot = if labels[t] == k { 1.0 } else { 0.0 };
            grad[t * c + k] = (p - onehot) / frames as f64 + g_logp[t * c + k] - p * g_sum;
        }
    }
    (total, Some(grad))
}

/// Training loss for per-stage logits (`stage → frame → class`).
pub fn loss(config: &CausalTcnConfig, logits: &[Vec<Vec<f64>>], labels: &[usize]) -> Result<f64, SegmenterError> {
    let mut total = 0f64;
    for stage in logits {
        check_labels(labels, stage.len(), config.num_classes)?;
        if stage.is_empty() {
            return Err(SegmenterError::EmptySequence);
        }
        let flat: Vec<f64> = stage.iter().flatten().copied().collect();
        if flat.len() != stage.len() * config.num_classes {
            return Err(SegmenterError::DimMismatch { expected: config.num_classes, found: stage[0].len() });
        }
        total += stage_loss(config, &flat, labels, false).0;
    }
    Ok(total)
}

/// Loss and its gradient w.r.t. every parameter, evaluated at `params`.
pub fn loss_and_gradient(
    config: &CausalTcnConfig,
    params: &[f64],
    sequence: &Sequence,
) -> Result<(f64, Vec<f64>), SegmenterError> {
    config.validate()?;
    let layout = Layout::new(config);
    if params.len() != layout.len {
        return Err(SegmenterError::ParamCount { expected: layout.len, found: params.len() });
    }
    let frames = sequence.features.len();
    let input = flatten_features(&sequence.features, config.input_dim)?;
    check_labels(&sequence.labels, frames, config.num_classes)?;
    let caches = forward_cached(config, &layout, params, &input, frames);

    let mut total = 0f64;
    let mut g_logits: Vec<Vec<f64>> = Vec::with_capacity(caches.len());
    for cache in &caches {
        let (l, g) = stage_loss(config, &cache.logits, &sequence.labels, true);
        total += l;
        g_logits.push(g.expect("requested"));
    }

    let mut grad = vec![0f64; layout.len];
    let c = config.num_classes;
    for s in (0..caches.len()).rev() {
        let g_input = backward_stage(config, &layout, s, params, &caches[s], &g_logits[s], frames, &mut grad);
        if s > 0 {
            // Stage s consumed softmax(logits of stage s-1).
            let probs = &caches[s - 1].probs;
            for t in 0..frames {
                let row = t * c..(t + 1) * c;
                let dot: f64 = probs[row.clone()].iter().zip(&g_input[row.clone()]).map(|(p, g)| p * g).sum();
                for k in row {
                    g_logits[s - 1][k] += probs[k] * (g_input[k] - dot);
                }
            }
        }
    }
    Ok((total, grad))
}

/// Accumulates parameter gradients of one stage and returns the gradient
/// w.r.t. the stage input.
#[allow(clippy::too_many_arguments)]
fn backward_stage(
    config: &CausalTcnConfig,
    layout: &Layout,
    s: usize,
    params: &[f64],
    cache: &StageCache,
    g_logits: &[f64],
    frames: usize,
    grad: &mut [f64],
) -> Vec<f64> {
    let (d, c, k) = (config.hidden_dim, config.num_classes, config.kernel_size);
    let stage = &layout.stages[s];
    let h_last = cache.h.last().expect("h present");

    let mut dh = vec![0f64; frames * d];
    for t in 0..frames {
        for o in 0..c {
            let g = g_logits[t * c + o];
            if g == 0.0 {
                continue;
            }
            grad[stage.out_b + o] += g;
            for i in 0..d {
                grad[stage.out_w + o * d + i] += g * h_last[t * d + i];
                dh[t * d + i] += g * params[stage.out_w + o * d + i];
            }
        }
    }

    let mut r = vec![0f64; d];
    let mut da = vec![0f64; frames * d];
    for (l, layer) in stage.layers.iter().enumerate().rev() {
        let h_in = &cache.h[l];
        let a = &cache.a[l];
        // Residual path carries dh straight through.
        let mut dh_in = dh.clone();
        for t in 0..frames {
            let a_row = &a[t * d..(t + 1) * d];
            for (ri, ai) in r.iter_mut().zip(a_row) {
                *ri = ai.max(0.0);
            }
            let dz = &dh[t * d..(t + 1) * d];
            let da_row = &mut da[t * d..(t + 1) * d];
            da_row.fill(0.0);
            for o in 0..d {
                let g = dz[o];
                grad[layer.res_b + o] += g;
                for i in 0..d {
                    grad[layer.res_w + o * d + i] += g * r[i];
                    da_row[i] += g * params[layer.res_w + o * d + i];
                }
            }
            for i in 0..d {
                if a_row[i] <= 0.0 {
                    da_row[i] = 0.0;
                }
            }
        }
        for t in 0..frames {
            for o in 0..d {
                let g = da[t * d + o];
                if g == 0.0 {
                    continue;
                }
                grad[layer.dil_b + o] += g;
                for j in 0..k {
                    let Some(src) = t.checked_sub(j * layer.dilation) else { break };
                    let w = layer.dil_w + (j * d + o) * d;
                    for i in 0..d {
                        grad[w + i] += g * h_in[src * d + i];
                        dh_in[src * d + i] += g * params[w + i];
                    }
                }
            }
        }
        dh = dh_in;
    }

    let din = stage.in_dim;
    let mut g_input = vec![0f64; frames * din];
    for t in 0..frames {
        for o in 0..d {
            let g = dh[t * d + o];
            if g == 0.0 {
                continue;
            }
            grad[stage.in_b + o] += g;
            for i in 0..din {
                grad[stage.in_w + o * din + i] += g * cache.input[t * din + i];
                g_input[t * din + i] += g * params[stage.in_w + o * din + i];
            }
        }
    }
    g_input
}

fn check_dataset(config: &CausalTcnConfig, dataset: &[Sequence]) -> Result<(), SegmenterError> {
    if dataset.is_empty() {
        return Err(SegmenterError::EmptyDataset);
    }
    for seq in dataset {
        if seq.features.is_empty() {
            return Err(SegmenterError::EmptySequence);
        }
        if let Some(row) = seq.features.iter().find(|r| r.len() != config.input_dim) {
            return Err(SegmenterError::DimMismatch { expected: config.input_dim, found: row.len() });
        }
        check_labels(&seq.labels, seq.features.len(), config.num_classes)?;
    }
    Ok(())
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam over sequences taken round-robin, one sequence per step. The
/// returned model's parameters are rounded to `f32`.
pub fn train(
    model: &CausalTcnModel,
    dataset: &[Sequence],
    steps: usize,
    learning_rate: f64,
) -> Result<(CausalTcnModel, TrainReport), SegmenterError> {
    let config = model.config().clone();
    check_dataset(&config, dataset)?;
    let mut params = model.params().to_vec();
    let mut m = vec![0f64; params.len()];
    let mut v = vec![0f64; params.len()];
    let mut losses = Vec::with_capacity(steps);

    for step in 0..steps {
        let seq = &dataset[step % dataset.len()];
        let (l, grad) = loss_and_gradient(&config, &params, seq)?;
        if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(SegmenterError::Diverged { step, loss: l });
        }
        losses.push(l);
        let t = (step + 1) as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, g), mi), vi) in params.iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
            *p -= learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
        }
    }

    let rounded: Vec<f32> = params.iter().map(|p| *p as f32).collect();
    let trained = CausalTcnModel::from_parameters(config, model.seed(), &rounded)?;
    Ok((trained, TrainReport { losses }))
}

/// Fraction of frames whose last-stage argmax equals the label.
pub fn frame_accuracy(model: &CausalTcnModel, dataset: &[Sequence]) -> Result<f64, SegmenterError> {
    let (mut correct, mut total) = (0usize, 0usize);
    for seq in dataset {
        let logits = model.forward(&seq.features)?;
        let last = logits.last().expect("stage present");
        check_labels(&seq.labels, last.len(), model.config().num_classes)?;
        correct += last.iter().zip(&seq.labels).filter(|(row, label)| argmax(row) == **label).count();
        total += seq.labels.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
