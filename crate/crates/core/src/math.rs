//! Numeric primitives shared by every operator.
//!
//! All reductions use a fixed summation order so results are bit-reproducible
//! run to run.

use crate::error::{ensure, Error, Result};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Default layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Dot product with eight interleaved partial sums.
///
/// The partial sums are combined in a fixed order, so the result depends only
/// on the inputs. The interleaving lets the compiler vectorize the loop.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[j] = dot(w.row(j), x)` for a `m × n` matrix `w` and an `n`-vector `x`.
#[inline]
pub fn matvec_into(w: &Matrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), out.len());
    for (o, row) in out.iter_mut().zip(w.iter_rows()) {
        *o = dot(row, x);
    }
}

/// Numerically stable softmax.
///
/// Entries equal to `-inf` are allowed (masked positions) and receive weight
/// exactly zero, as long as at least one entry is finite.
pub fn stable_softmax(x: &[f64]) -> Result<Vec<f64>> {
    ensure!(!x.is_empty(), "softmax of an empty vector");
    if let Some(i) = x.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::contract(format!("softmax input {i} is {}", x[i])));
    }
    let mut out = x.to_vec();
    ensure!(
        softmax_in_place(&mut out),
        "softmax input has no finite entry"
    );
    Ok(out)
}

/// In-place softmax; returns `false` (leaving `x` untouched) when every
/// entry is `-inf`.
#[inline]
pub(crate) fn softmax_in_place(x: &mut [f64]) -> bool {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
    true
}

/// Softmax over `row[..valid]`; entries from `valid` on are causally masked
/// and set to exactly zero.
#[inline]
pub(crate) fn masked_softmax_in_place(row: &mut [f64], valid: usize) {
    let (live, masked) = row.split_at_mut(valid);
    let ok = softmax_in_place(live);
    debug_assert!(ok, "causal row without a finite score");
    masked.fill(0.0);
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GELU, `x * Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_in_place(xs: &mut [f64]) {
    for x in xs {
        *x = gelu(*x);
    }
}

/// Logistic sigmoid, evaluated without overflow for any finite input.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(x))`, finite for every finite `x`.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Layer normalization with population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    let n = x.len();
    ensure!(n >= 2, "layer_norm needs at least 2 features, got {n}");
    ensure!(
        gain.len() == n && bias.len() == n,
        "layer_norm gain/bias length mismatch ({}, {}) for {n} features",
        gain.len(),
        bias.len()
    );
    ensure!(eps >= 0.0 && eps.is_finite(), "layer_norm eps must be >= 0, got {eps}");
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let denom = (var + eps).sqrt();
    ensure!(denom > 0.0, "layer_norm of a constant vector with eps = 0");
    Ok(x.iter()
        .zip(gain)
        .zip(bias)
        .map(|((v, g), b)| g * (v - mean) / denom + b)
        .collect())
}

/// Dense matrix product in fixed `i-k-j` loop order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure!(
        a.cols() == b.rows(),
        "matmul inner dimensions disagree: {}x{} * {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    );
    let mut out = Matrix::zeros(a.rows(), b.cols());
    if b.cols() == 0 {
        return Ok(out);
    }
    for i in 0..a.rows() {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            axpy(aik, b.row(k), orow);
        }
    }
    Ok(out)
}

/// `rows × cols` matrix with i.i.d. `N(0, std²)` entries.
pub fn gaussian_init(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Result<Matrix> {
    ensure!(std > 0.0 && std.is_finite(), "gaussian_init std must be > 0, got {std}");
    let data = (0..rows * cols).map(|_| std * rng.standard_normal()).collect();
    Matrix::from_vec(rows, cols, data)
}
