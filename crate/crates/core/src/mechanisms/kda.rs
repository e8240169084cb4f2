//! Delta-rule memory with per-dimension decay.
//!
//! Per step: `S' = diag(a) S`, `S = S' + β k̃ᵀ (v − S'ᵀ k̃)`, `o = Sᵀ q`,
//! where `k̃ = k / ‖k‖`.

use crate::math::{axpy, dot};

/// Keys shorter than this are used unnormalized.
pub const KEY_NORM_FLOOR: f64 = 1e-12;

/// One step on a `d × d` state (rows indexed by key dimension).
///
/// `a` holds the `d` decay factors, `beta` the write strength; `key` and
/// `delta` are `d`-element work buffers.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn step_head(
    state: &mut [f64],
    a: &[f64],
    beta: f64,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    key: &mut [f64],
    delta: &mut [f64],
    out: &mut [f64],
) {
    let d = q.len();
    let norm = dot(k, k).sqrt();
    if norm < KEY_NORM_FLOOR {
        key.copy_from_slice(k);
    } else {
        for (x, kc) in key.iter_mut().zip(k) {
            *x = kc / norm;
        }
    }

    // decay, then read the current prediction for the key
    delta.copy_from_slice(v);
    for c in 0..d {
        let row = &mut state[c * d..(c + 1) * d];
        let ac = a[c];
        row.iter_mut().for_each(|x| *x *= ac);
        axpy(-key[c], row, delta);
    }

    out.fill(0.0);
    for c in 0..d {
        let row = &mut state[c * d..(c + 1) * d];
        axpy(beta * key[c], delta, row);
        axpy(q[c], row, out);
    }
}
