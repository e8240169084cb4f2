use attnscale_bench::{
    fit_scaling_exponent, measure_latency, measure_peak_memory, run_sweep, run_sweep_with, BenchConfig, BenchError,
    SweepEvent,
};
use attnscale_core::{ExecutionMode, Mechanism, MechanismConfig, MechanismKind, Rng};
use proptest::prelude::*;

fn small(mechanisms: &[MechanismKind], lengths: &[usize]) -> BenchConfig {
    BenchConfig {
        mechanisms: mechanisms.to_vec(),
        lengths: lengths.to_vec(),
        model_dim: 16,
        num_heads: 2,
        slots: 4,
        repeats: 5,
        warmup: 1,
        seed: 42,
        ..BenchConfig::default()
    }
}

#[test]
fn sweep_cardinality_and_order() {
    let result = run_sweep(&small(&[MechanismKind::Kda, MechanismKind::Sa], &[8, 16, 32])).unwrap();
    assert_eq!(result.records.len(), 2 * 3 * 5);
    assert!(result.failures.is_empty());
    let keys: Vec<_> = result.records.iter().map(|r| (r.mechanism, r.seq_len, r.repeat)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(result.records[0].mechanism, MechanismKind::Sa);
    assert!(result.records.iter().all(|r| r.latency_ms > 0.0 && r.peak_bytes > 0));
    assert!(result
        .records
        .iter()
        .all(|r| r.mode == r.mechanism.default_mode() && r.model_dim == 16 && r.heads == 2));
}

#[test]
fn empty_length_list_is_a_vacuous_sweep() {
    let result = run_sweep(&small(&[MechanismKind::Sa], &[])).unwrap();
    assert!(result.records.is_empty() && result.failures.is_empty());
    assert!(result.fits().is_empty());
}

#[test]
fn fits_need_four_lengths() {
    let three = run_sweep(&small(&[MechanismKind::RetNet], &[8, 16, 32])).unwrap();
    assert!(three.fits().is_empty());
    let four = run_sweep(&small(&[MechanismKind::RetNet], &[8, 16, 32, 64])).unwrap();
    assert_eq!(four.fits().len(), 1);
}

#[test]
fn length_cap_records_failures_and_continues() {
    let mut cfg = small(&[MechanismKind::Sa, MechanismKind::Gsa], &[8, 16, 32, 64]);
    cfg.max_length_cap = Some(16);
    let mut events = Vec::new();
    let result = run_sweep_with(&cfg, |e| events.push(e.clone())).unwrap();
    assert_eq!(result.records.len(), 2 * 2 * 5);
    assert_eq!(result.failures.len(), 4);
    assert!(result.failures.iter().all(|f| f.seq_len > 16 && f.reason.contains("cap")));
    assert_eq!(events.iter().filter(|e| matches!(e, SweepEvent::Measured { .. })).count(), 4);
}

#[test]
fn sweeps_repeat_structure_and_memory() {
    let cfg = small(&[MechanismKind::LightNet, MechanismKind::Fox], &[8, 16, 32]);
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    let shape = |r: &attnscale_bench::SweepResult| {
        r.records
            .iter()
            .map(|x| (x.mechanism, x.mode, x.seq_len, x.repeat, x.peak_bytes))
            .collect::<Vec<_>>()
    };
    assert_eq!(shape(&a), shape(&b));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(&[MechanismKind::Sa], &[16, 8]);
    assert!(matches!(run_sweep(&cfg), Err(BenchError::Config(_))));
    cfg.lengths = vec![8, 16];
    cfg.repeats = 2;
    assert!(matches!(run_sweep(&cfg), Err(BenchError::Config(_))));
    cfg.repeats = 3;
    cfg.mode = Some(ExecutionMode::Recurrent);
    assert!(matches!(run_sweep(&cfg), Err(BenchError::Config(_))));
    cfg.mode = None;
    cfg.num_heads = 3;
    assert!(run_sweep(&cfg).is_err());
}

#[test]
fn measure_latency_returns_each_repeat() {
    let mech = Mechanism::new(MechanismKind::Kda, MechanismConfig::new(16, 2)).unwrap();
    let t = measure_latency(&mech, ExecutionMode::Recurrent, 32, 5, 2, &mut Rng::new(1)).unwrap();
    assert_eq!(t.len(), 5);
    assert!(t.iter().all(|x| *x > 0.0));
}

fn peak(kind: MechanismKind, mode: ExecutionMode, len: usize) -> u64 {
    let mech = Mechanism::new(kind, MechanismConfig::new(32, 2)).unwrap();
    measure_peak_memory(&mech, mode, len, &mut Rng::new(0)).unwrap()
}

#[test]
fn softmax_peak_grows_quadratically() {
    let (a, b) = (peak(MechanismKind::Sa, ExecutionMode::Parallel, 1024), peak(MechanismKind::Sa, ExecutionMode::Parallel, 2048));
    let ratio = b as f64 / a as f64;
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn recurrent_peak_is_flat() {
    for kind in MechanismKind::BOUNDED {
        assert_eq!(
            peak(kind, ExecutionMode::Recurrent, 64),
            peak(kind, ExecutionMode::Recurrent, 2048),
            "{kind}"
        );
    }
}

#[test]
fn softmax_latency_grows_with_length() {
    let mech = Mechanism::new(MechanismKind::Sa, MechanismConfig::new(64, 4)).unwrap();
    let mut rng = Rng::new(3);
    let mut med = |len| {
        let t = measure_latency(&mech, ExecutionMode::Parallel, len, 5, 2, &mut rng).unwrap();
        attnscale_bench::median(&t)
    };
    let (a, b) = (med(128), med(1024));
    assert!(b > a, "{a} vs {b}");
}

proptest! {
    #[test]
    fn exact_power_laws_recover_their_exponent(p in 0.3..3.0f64, c in 1e-3..1e3f64, n in 4usize..8) {
        let lengths: Vec<usize> = (0..n).map(|i| 16 << i).collect();
        let times: Vec<f64> = lengths.iter().map(|&l| c * (l as f64).powf(p)).collect();
        let fit = fit_scaling_exponent(&lengths, &times).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-7);
        prop_assert!(fit.r2 > 1.0 - 1e-9);
    }

    #[test]
    fn fit_is_invariant_to_time_units(scale in 1e-6..1e6f64) {
        let lengths = [64, 128, 256, 512, 1024];
        let times = [1.0, 2.3, 3.9, 9.1, 15.5];
        let a = fit_scaling_exponent(&lengths, &times).unwrap();
        let b = fit_scaling_exponent(&lengths, &times.map(|t| t * scale)).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9 && (a.r2 - b.r2).abs() < 1e-9);
    }
}
