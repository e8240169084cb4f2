//! Normalized linear attention with exponential key features.
//!
//! `o_t = (q_t · Σ_{s≤t} φ(k_s)ᵀ v_s) / (q_t · Σ_{s≤t} φ(k_s))` with
//! `φ(k) = exp(k − m)`. The reference `m` is the running maximum of all key
//! entries seen so far (floored at 0); when it grows the accumulated state is
//! rescaled, which leaves the ratio unchanged while keeping every feature in
//! `(0, 1]`.

use crate::error::Result;
use crate::math::{axpy, dot};
use crate::memory::{Diagnostics, MemoryAccountant};

/// Denominators smaller than this in magnitude are clamped to it.
pub const DENOMINATOR_GUARD: f64 = 1e-8;

#[inline]
fn guard(den: f64, diag: &Diagnostics) -> f64 {
    if den.abs() < DENOMINATOR_GUARD {
        diag.record_small_denominator();
        DENOMINATOR_GUARD.copysign(if den == 0.0 { 1.0 } else { den })
    } else {
        den
    }
}

/// One recurrent step. `phi` is a `d`-element work buffer.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn step_head(
    s: &mut [f64],
    z: &mut [f64],
    max: &mut f64,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    phi: &mut [f64],
    diag: &Diagnostics,
    out: &mut [f64],
) {
    let d = q.len();
    let m_new = k.iter().copied().fold(*max, f64::max);
    if m_new > *max {
        let scale = (*max - m_new).exp();
        s.iter_mut().for_each(|x| *x *= scale);
        z.iter_mut().for_each(|x| *x *= scale);
        *max = m_new;
    }
    for (p, kc) in phi.iter_mut().zip(k) {
        *p = (kc - m_new).exp();
    }
    out.fill(0.0);
    for c in 0..d {
        let row = &mut s[c * d..(c + 1) * d];
        axpy(phi[c], v, row);
        z[c] += phi[c];
        axpy(q[c], row, out);
    }
    let den = guard(dot(q, z), diag);
    out.iter_mut().for_each(|x| *x /= den);
}

/// Parallel form: the `len × len` matrix `A[t,s] = (q_t · φ_s) e^{m_s − m_t}`
/// (causally masked) is materialized, then `o_t = Σ_s A[t,s] v_s / Σ_s A[t,s]`.
/// Uses the same prefix-maximum reference as the recurrent form.
#[allow(clippy::too_many_arguments)]
pub fn parallel_head(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    len: usize,
    d: usize,
    acct: &MemoryAccountant,
    diag: &Diagnostics,
    out: &mut [f64],
) -> Result<()> {
    let mut prefix_max = acct.buffer(len)?;
    let mut m = 0.0f64;
    for (t, pm) in prefix_max.iter_mut().enumerate() {
        m = k[t * d..(t + 1) * d].iter().copied().fold(m, f64::max);
        *pm = m;
    }
    let mut phi = acct.buffer(len * d)?;
    for t in 0..len {
        for c in 0..d {
            phi[t * d + c] = (k[t * d + c] - prefix_max[t]).exp();
        }
    }
    let mut weights = acct.buffer(len * len)?;
    for t in 0..len {
        let qt = &q[t * d..(t + 1) * d];
        let row = &mut weights[t * len..(t + 1) * len];
        for (s, w) in row[..=t].iter_mut().enumerate() {
            *w = dot(qt, &phi[s * d..(s + 1) * d]) * (prefix_max[s] - prefix_max[t]).exp();
        }
    }
    for t in 0..len {
        let row = &weights[t * len..(t + 1) * len];
        let ot = &mut out[t * d..(t + 1) * d];
        ot.fill(0.0);
        let mut den = 0.0;
        for (s, &w) in row[..=t].iter().enumerate() {
            axpy(w, &v[s * d..(s + 1) * d], ot);
            den += w;
        }
        let den = guard(den, diag);
        ot.iter_mut().for_each(|x| *x /= den);
    }
    Ok(())
}
