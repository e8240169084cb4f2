//! Causal softmax attention (SA) and its forgetting-gate variant (FoX).
//!
//! Both materialize the full `L × L` score matrix; that buffer is the
//! quadratic cost the benchmarks measure.

use crate::error::Result;
use crate::math::{axpy, dot, masked_softmax_in_place};
use crate::memory::MemoryAccountant;

/// Additive FoX bias `D[i,j] = Σ_{l=j+1..=i} ln f_l`, built from one prefix
/// sum of the log forget gates.
///
/// A gate of exactly zero (`ln f = -inf`) cuts the sequence: no position at
/// or after it can see anything before it. Prefix sums restart after each
/// cut, so the bias is never `NaN`.
#[derive(Debug, Clone)]
pub struct ForgetBias {
    cumulative: Vec<f64>,
    cut: Vec<usize>,
}

impl ForgetBias {
    pub fn from_log_gates(log_f: &[f64]) -> Self {
        let mut cumulative = Vec::with_capacity(log_f.len());
        let mut cut = Vec::with_capacity(log_f.len());
        let (mut c, mut start) = (0.0, 0);
        for (l, &lf) in log_f.iter().enumerate() {
            if lf == f64::NEG_INFINITY {
                c = 0.0;
                start = l;
            } else {
                c += lf;
            }
            cumulative.push(c);
            cut.push(start);
        }
        Self { cumulative, cut }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Bias for query `i` attending to key `j <= i`.
    #[inline]
    pub fn bias(&self, i: usize, j: usize) -> f64 {
        if j < self.cut[i] {
            f64::NEG_INFINITY
        } else {
            self.cumulative[i] - self.cumulative[j]
        }
    }
}

/// One head of causal attention, `softmax(QKᵀ/√d + B + mask) V`, into `out`
/// (`len × d`). `B` is the optional forget bias.
#[allow(clippy::too_many_arguments)]
pub fn causal_softmax_head(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    len: usize,
    d: usize,
    bias: Option<&ForgetBias>,
    acct: &MemoryAccountant,
    out: &mut [f64],
) -> Result<()> {
    let mut scores = acct.buffer(len * len)?;
    let scale = 1.0 / (d as f64).sqrt();

    for i in 0..len {
        let qi = &q[i * d..(i + 1) * d];
        let row = &mut scores[i * len..(i + 1) * len];
        for (j, s) in row[..=i].iter_mut().enumerate() {
            *s = dot(qi, &k[j * d..(j + 1) * d]) * scale;
        }
        if let Some(b) = bias {
            for (j, s) in row[..=i].iter_mut().enumerate() {
                *s += b.bias(i, j);
            }
        }
        row[i + 1..].fill(f64::NEG_INFINITY);
    }

    for i in 0..len {
        masked_softmax_in_place(&mut scores[i * len..(i + 1) * len], i + 1);
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
