//! Attention pooling over the sequence followed by an 8-way classifier.

use crate::error::{ensure, Result};
use crate::math::{self, gaussian_init, matvec_into, stable_softmax, LAYER_NORM_EPS};
use crate::rng::Rng;
use crate::tensor::{Matrix, SequenceTensor};

pub const NUM_CLASSES: usize = 8;

/// Learned pooling query `q` (length `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingParams {
    pub query: Vec<f64>,
}

impl PoolingParams {
    pub fn new(query: Vec<f64>) -> Self {
        Self { query }
    }

    pub fn init(rng: &mut Rng, model_dim: usize) -> Result<Self> {
        let q = gaussian_init(rng, 1, model_dim, 1.0 / (model_dim as f64).sqrt())?;
        Ok(Self { query: q.into_vec() })
    }

    pub fn param_count(model_dim: usize) -> usize {
        model_dim
    }
}

/// Pooling weights `ω = softmax(H q / √D)`.
pub fn attention_weights(h: &SequenceTensor, params: &PoolingParams) -> Result<Vec<f64>> {
    ensure!(h.rows() >= 1, "cannot pool an empty sequence");
    ensure!(
        params.query.len() == h.cols(),
        "pooling query has length {}, sequence width is {}",
        params.query.len(),
        h.cols()
    );
    h.ensure_finite("pooling input")?;
    let scale = 1.0 / (h.cols() as f64).sqrt();
    let scores: Vec<f64> = h
        .iter_rows()
        .map(|row| math::dot(row, &params.query) * scale)
        .collect();
    stable_softmax(&scores)
}

/// `c = Σ_i ω_i h_i`.
pub fn attention_pool(h: &SequenceTensor, params: &PoolingParams) -> Result<Vec<f64>> {
    let w = attention_weights(h, params)?;
    let mut c = vec![0.0; h.cols()];
    for (wi, row) in w.iter().zip(h.iter_rows()) {
        math::axpy(*wi, row, &mut c);
    }
    Ok(c)
}

/// LayerNorm → Linear(D, D) → GELU → Linear(D, 8). Dropout is the identity
/// at inference and has no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    /// `D × D`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `8 × D`
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(model_dim: usize) -> Self {
        Self {
            ln_gain: vec![1.0; model_dim],
            ln_bias: vec![0.0; model_dim],
            w1: Matrix::zeros(model_dim, model_dim),
            b1: vec![0.0; model_dim],
            w2: Matrix::zeros(NUM_CLASSES, model_dim),
            b2: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn init(rng: &mut Rng, model_dim: usize) -> Result<Self> {
        let std = 1.0 / (model_dim as f64).sqrt();
        Ok(Self {
            w1: gaussian_init(rng, model_dim, model_dim, std)?,
            w2: gaussian_init(rng, NUM_CLASSES, model_dim, std)?,
            ..Self::zeros(model_dim)
        })
    }

    pub fn param_count(model_dim: usize) -> usize {
        2 * model_dim + model_dim * model_dim + model_dim + NUM_CLASSES * model_dim + NUM_CLASSES
    }

    fn validate(&self, model_dim: usize) -> Result<()> {
        ensure!(
            self.ln_gain.len() == model_dim
                && self.ln_bias.len() == model_dim
                && self.w1.shape() == (model_dim, model_dim)
                && self.b1.len() == model_dim
                && self.w2.shape() == (NUM_CLASSES, model_dim)
                && self.b2.len() == NUM_CLASSES,
            "classifier parameters do not match width {model_dim}"
        );
        Ok(())
    }
}

/// Eight logits for the pooled vector `c`.
pub fn classifier_forward(c: &[f64], params: &ClassifierParams) -> Result<[f64; NUM_CLASSES]> {
    params.validate(c.len())?;
    ensure!(c.iter().all(|x| x.is_finite()), "classifier input has non-finite entries");
    let normed = math::layer_norm(c, &params.ln_gain, &params.ln_bias, LAYER_NORM_EPS)?;
    let mut hidden = vec![0.0; c.len()];
    matvec_into(&params.w1, &normed, &mut hidden);
    for (x, b) in hidden.iter_mut().zip(&params.b1) {
        *x = math::gelu(*x + b);
    }
    let mut logits = [0.0; NUM_CLASSES];
    matvec_into(&params.w2, &hidden, &mut logits);
    for (x, b) in logits.iter_mut().zip(&params.b2) {
        *x += b;
    }
    ensure!(logits.iter().all(|x| x.is_finite()), "classifier produced non-finite logits");
    Ok(logits)
}

/// 1-based argmax; ties go to the lowest index.
pub fn predict(logits: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    best + 1
}
