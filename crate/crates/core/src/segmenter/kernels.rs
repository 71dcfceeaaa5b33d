//! Per-frame arithmetic shared by batch and incremental inference. Both
//! paths call these exact functions so their results agree bit for bit.

/// `out[o] = b[o] + Σ_i w[o, i] · x[i]` with `w` row-major `out × in`.
pub(crate) fn dense_row(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let din = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &w[o * din..(o + 1) * din];
        let mut acc = b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *y = acc;
    }
}

/// Causal dilated convolution at one frame. `taps[j]` is the input `j`
/// dilation steps in the past, `None` where that falls before the start.
/// `w` is laid out `[tap][out][in]`.
pub(crate) fn dilated_row(w: &[f64], b: &[f64], taps: &[Option<&[f64]>], out: &mut [f64]) {
    let d = out.len();
    out.copy_from_slice(b);
    for (j, tap) in taps.iter().enumerate() {
        let Some(x) = tap else { continue };
        for (o, y) in out.iter_mut().enumerate() {
            let row = &w[(j * d + o) * d..(j * d + o + 1) * d];
            let mut acc = 0f64;
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            *y += acc;
        }
    }
}

pub(crate) fn relu(x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = v.max(0.0);
    }
}

pub(crate) fn softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0f64;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn log_softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}
