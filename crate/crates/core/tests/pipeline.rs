//! End-to-end fusion pipeline checks against a hand-composed oracle.

mod common;

use attnscale_core::math::{layer_norm, LAYER_NORM_EPS};
use attnscale_core::pipeline::{
    concat_modalities, length_adjust, model_forward, model_forward_streaming, split_modalities, synth_corpus,
    FeatureStats, ModelParams, PipelineConfig, SyntheticCorpusSpec,
};
use attnscale_core::pooling::{predict, NUM_CLASSES};
use attnscale_core::{ExecutionMode, Matrix, MechanismKind, Rng};
use common::*;
use proptest::prelude::*;

fn small_config(kind: MechanismKind, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(kind, 16, seed);
    cfg.speech_len = 12;
    cfg.text_len = 5;
    cfg.mechanism_config.num_heads = 2;
    cfg.mechanism_config.slots = 4;
    cfg.mode = kind.default_mode();
    cfg
}

/// Pooling and classifier written out with plain loops.
fn oracle_head(h: &Matrix, params: &ModelParams) -> [f64; NUM_CLASSES] {
    let dim = h.cols();
    let scores: Vec<f64> = h
        .iter_rows()
        .map(|r| naive_dot(&params.pooling.query, r) / (dim as f64).sqrt())
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut c = vec![0.0; dim];
    for (t, r) in h.iter_rows().enumerate() {
        for j in 0..dim {
            c[j] += e[t] / z * r[j];
        }
    }
    let cl = &params.classifier;
    let normed = layer_norm(&c, &cl.ln_gain, &cl.ln_bias, LAYER_NORM_EPS).unwrap();
    let hidden: Vec<f64> = naive_matvec(&cl.w1, &normed)
        .iter()
        .zip(&cl.b1)
        .map(|(x, b)| attnscale_core::math::gelu(x + b))
        .collect();
    let mut logits = [0.0; NUM_CLASSES];
    for (i, (x, b)) in naive_matvec(&cl.w2, &hidden).iter().zip(&cl.b2).enumerate() {
        logits[i] = x + b;
    }
    logits
}

#[test]
fn pipeline_matches_composed_oracle() {
    for kind in MechanismKind::ALL {
        let cfg = small_config(kind, 7);
        let params = ModelParams::init(&cfg).unwrap();
        let (speech, text) = cfg.synth_inputs().unwrap();
        let pred = model_forward(&speech, &text, &params, cfg.mode).unwrap();

        let mut rows: Vec<Vec<f64>> = speech.iter_rows().map(<[f64]>::to_vec).collect();
        rows.extend(text.iter_rows().map(<[f64]>::to_vec));
        let u = Matrix::from_rows(&rows).unwrap();
        let h = params.mechanism.forward(&u, cfg.mode).unwrap();
        let logits = oracle_head(&h, &params);
        for (a, b) in pred.logits.iter().zip(&logits) {
            assert!((a - b).abs() <= 1e-10, "{kind}: {a} vs {b}");
        }
        assert_eq!(pred.class, predict(&logits));
    }
}

#[test]
fn streaming_matches_batch_for_bounded_mechanisms() {
    for kind in MechanismKind::BOUNDED {
        let cfg = small_config(kind, 3);
        let params = ModelParams::init(&cfg).unwrap();
        let (speech, text) = cfg.synth_inputs().unwrap();
        let batch = model_forward(&speech, &text, &params, ExecutionMode::Recurrent).unwrap();
        let stream = model_forward_streaming(&speech, &text, &params).unwrap();
        assert_eq!(batch, stream, "{kind}");
    }
}

#[test]
fn streaming_is_refused_for_unbounded_mechanisms() {
    let cfg = small_config(MechanismKind::Sa, 3);
    let params = ModelParams::init(&cfg).unwrap();
    let (speech, text) = cfg.synth_inputs().unwrap();
    assert!(model_forward_streaming(&speech, &text, &params).is_err());
}

#[test]
fn pipeline_is_deterministic_per_seed() {
    let run = |seed| {
        let cfg = small_config(MechanismKind::RetNet, seed);
        let params = ModelParams::init(&cfg).unwrap();
        let (s, t) = cfg.synth_inputs().unwrap();
        model_forward(&s, &t, &params, cfg.mode).unwrap()
    };
    assert_eq!(run(11), run(11));
    assert_ne!(run(11).logits, run(12).logits);
}

#[test]
fn empty_text_and_empty_speech() {
    let cfg = small_config(MechanismKind::LightNet, 2);
    let params = ModelParams::init(&cfg).unwrap();
    let (speech, _) = cfg.synth_inputs().unwrap();
    let empty = Matrix::zeros(0, 16);
    let p = model_forward(&speech, &empty, &params, cfg.mode).unwrap();
    assert!((1..=NUM_CLASSES).contains(&p.class));
    assert!(model_forward(&empty, &speech, &params, cfg.mode).is_err());
}

#[test]
fn mismatched_widths_are_rejected() {
    assert!(concat_modalities(&random_input(0, 3, 8), &random_input(0, 2, 6)).is_err());
}

#[test]
fn corpus_lengths_respect_ranges() {
    let spec = SyntheticCorpusSpec {
        num_samples: 30,
        speech_len: (4, 9),
        text_len: (1, 3),
        stats: FeatureStats::standard(4),
    };
    let corpus = synth_corpus(&spec, &mut Rng::new(1)).unwrap();
    assert_eq!(corpus.len(), 30);
    for s in &corpus {
        assert!((4..=9).contains(&s.speech.rows()));
        assert!((1..=3).contains(&s.text.rows()));
    }
}

proptest! {
    #[test]
    fn concat_then_split_round_trips(seed in any::<u64>(), s in 1usize..10, e in 0usize..10) {
        let speech = random_input(seed, s, 3);
        let text = if e == 0 { Matrix::zeros(0, 3) } else { random_input(seed ^ 1, e, 3) };
        let u = concat_modalities(&speech, &text).unwrap();
        prop_assert_eq!(u.rows(), s + e);
        let (a, b) = split_modalities(&u, s).unwrap();
        prop_assert_eq!(a, speech);
        prop_assert_eq!(b.rows(), e);
        if e > 0 {
            prop_assert_eq!(b, text);
        }
    }

    #[test]
    fn length_adjust_only_reuses_source_rows(seed in any::<u64>(), rows in 1usize..30, target in 1usize..60) {
        let src = random_input(seed, rows, 3);
        let out = length_adjust(&src, target, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(out.rows(), target);
        for r in out.iter_rows() {
            prop_assert!(src.iter_rows().any(|s| s == r));
        }
        if rows >= target {
            // A crop is one contiguous window.
            let start = (0..=rows - target).find(|&i| src.row(i) == out.row(0)).unwrap();
            prop_assert_eq!(src.slice_rows(start, start + target), out);
        }
    }
}
