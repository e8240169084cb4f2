#![allow(dead_code)]

use attnscale_core::pipeline::{synth_features, FeatureStats};
use attnscale_core::{Matrix, Mechanism, MechanismConfig, MechanismKind, Rng};

pub fn random_input(seed: u64, len: usize, dim: usize) -> Matrix {
    synth_features(&mut Rng::with_stream(seed, 99), len, &FeatureStats::standard(dim)).unwrap()
}

pub fn mechanism(kind: MechanismKind, dim: usize, heads: usize, seed: u64) -> Mechanism {
    Mechanism::new(kind, MechanismConfig::new(dim, heads).with_slots(8).with_seed(seed)).unwrap()
}

pub fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `W x` with a plain loop.
pub fn naive_matvec(w: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| naive_dot(w.row(r), x)).collect()
}

pub fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}
