//! Gated slot attention: a fixed bank of `m` latent key/value slots, each
//! interpolated toward the current token by its own retention gate, read out
//! with softmax attention over the slots.

use crate::math::{axpy, dot, softmax_in_place};

/// One step on slot banks `keys`, `values` (each `m × d`).
///
/// `alpha` holds the `m` retention gates in `[0, 1]`; `scores` is an
/// `m`-element work buffer.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn step_head(
    keys: &mut [f64],
    values: &mut [f64],
    alpha: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    scores: &mut [f64],
    out: &mut [f64],
) {
    let d = q.len();
    let scale = 1.0 / (d as f64).sqrt();
    for (i, &a) in alpha.iter().enumerate() {
        let w = 1.0 - a;
        let kr = &mut keys[i * d..(i + 1) * d];
        for (x, kc) in kr.iter_mut().zip(k) {
            *x = a * *x + w * kc;
        }
        let vr = &mut values[i * d..(i + 1) * d];
        for (x, vc) in vr.iter_mut().zip(v) {
            *x = a * *x + w * vc;
        }
        scores[i] = dot(q, kr) * scale;
    }
    softmax_in_place(scores);
    out.fill(0.0);
    for (i, &w) in scores.iter().enumerate() {
        axpy(w, &values[i * d..(i + 1) * d], out);
    }
}
