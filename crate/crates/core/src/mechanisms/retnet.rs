//! Retention: exponentially decayed key-value accumulation.
//!
//! Recurrent: `S_t = γ S_{t-1} + k_tᵀ v_t`, `o_t = q_t S_t`.
//! Parallel: `O = ((Q Kᵀ) ⊙ D) V` with `D[n,m] = γ^(n-m)` for `n >= m`.

use crate::error::{ensure, Result};
use crate::math::{axpy, dot};
use crate::memory::MemoryAccountant;

/// One recurrent step on a `d × d` state.
#[inline]
pub fn step_head(state: &mut [f64], gamma: f64, q: &[f64], k: &[f64], v: &[f64], out: &mut [f64]) {
    let d = q.len();
    out.fill(0.0);
    for c in 0..d {
        let row = &mut state[c * d..(c + 1) * d];
        let kc = k[c];
        for (s, vj) in row.iter_mut().zip(v) {
            *s = gamma * *s + kc * vj;
        }
        axpy(q[c], row, out);
    }
}

/// Parallel form over a whole head; materializes the `len × len` decayed
/// score matrix.
#[allow(clippy::too_many_arguments)]
pub fn parallel_head(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    len: usize,
    d: usize,
    gamma: f64,
    acct: &MemoryAccountant,
    out: &mut [f64],
) -> Result<()> {
    ensure!(gamma > 0.0 && gamma < 1.0, "RetNet decay {gamma} outside (0, 1)");
    let mut powers = acct.buffer(len)?;
    for (n, p) in powers.iter_mut().enumerate() {
        *p = gamma.powi(n as i32);
    }
    let mut scores = acct.buffer(len * len)?;
    for i in 0..len {
        let qi = &q[i * d..(i + 1) * d];
        let row = &mut scores[i * len..(i + 1) * len];
        for (j, s) in row[..=i].iter_mut().enumerate() {
            *s = dot(qi, &k[j * d..(j + 1) * d]) * powers[i - j];
        }
    }
    for i in 0..len {
        let row = &scores[i * len..(i + 1) * len];
        let oi = &mut out[i * d..(i + 1) * d];
        oi.fill(0.0);
        for (j, &w) in row[..=i].iter().enumerate() {
            axpy(w, &v[j * d..(j + 1) * d], oi);
        }
    }
    Ok(())
}
