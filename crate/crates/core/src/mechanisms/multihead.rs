use super::params::{accumulate_output, project_qkv, HeadParams};
use crate::error::{ensure, Result};
use crate::memory::MemoryAccountant;
use crate::tensor::Matrix;

/// Row-major `len × d` projections of one head.
#[derive(Debug, Clone, Copy)]
pub struct HeadInputs<'a> {
    pub q: &'a [f64],
    pub k: &'a [f64],
    pub v: &'a [f64],
    pub len: usize,
    pub d: usize,
}

/// Splits `u` into per-head projections, runs `per_head` on each, and
/// combines the head outputs through `w_o`.
///
/// Heads run one after another; each head's `q`, `k`, `v` and output buffers
/// are charged to `acct` and released before the next head starts. The
/// result equals `W_o · concat(o_1, …, o_H)`, accumulated one head block of
/// `W_o` at a time.
pub fn multihead_apply<F>(
    u: &Matrix,
    heads: &[HeadParams],
    w_o: &Matrix,
    acct: &MemoryAccountant,
    mut per_head: F,
) -> Result<Matrix>
where
    F: FnMut(usize, &HeadParams, HeadInputs<'_>, &mut [f64]) -> Result<()>,
{
    let len = u.rows();
    let total: usize = heads.iter().map(HeadParams::head_dim).sum();
    ensure!(
        w_o.cols() == total,
        "w_o has {} columns but heads produce {total}",
        w_o.cols()
    );
    let mut out = Matrix::zeros(len, w_o.rows());
    let mut offset = 0;
    for (h, head) in heads.iter().enumerate() {
        let d = head.head_dim();
        ensure!(
            head.w_q.cols() == u.cols(),
            "head {h} expects width {}, input has {}",
            head.w_q.cols(),
            u.cols()
        );
        let mut q = acct.buffer(len * d)?;
        let mut k = acct.buffer(len * d)?;
        let mut v = acct.buffer(len * d)?;
        for t in 0..len {
            let r = t * d..(t + 1) * d;
            project_qkv(head, u.row(t), &mut q[r.clone()], &mut k[r.clone()], &mut v[r]);
        }
        let mut o = acct.buffer(len * d)?;
        let inputs = HeadInputs {
            q: &q,
            k: &k,
            v: &v,
            len,
            d,
        };
        per_head(h, head, inputs, &mut o)?;
        for t in 0..len {
            accumulate_output(w_o, offset, &o[t * d..(t + 1) * d], out.row_mut(t));
        }
        offset += d;
    }
    Ok(out)
}
