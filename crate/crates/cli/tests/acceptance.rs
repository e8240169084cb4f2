//! Acceptance gate. One test per criterion; each writes a single
//! `acceptance NN ... PASS|FAIL` line to stdout (bypassing capture) before
//! asserting. Tests are serialized so the timing sweep runs on a quiet core.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};

use attnscale_cli::verify::workload;
use attnscale_core::math::{self, logistic};
use attnscale_core::mechanisms::{kda, retnet, GateProjection, HeadExtra};
use attnscale_core::pipeline::{synth_features, FeatureStats};
use attnscale_core::pooling::{attention_pool, attention_weights, PoolingParams};
use attnscale_core::{ExecutionMode, Matrix, Mechanism, MechanismConfig, MechanismKind, Rng};

const SWEEP_LENGTHS: [usize; 5] = [1024, 2048, 4096, 8192, 16384];
const BOUNDED: [&str; 4] = ["retnet", "lightnet", "gsa", "kda"];

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance {n:>2} {name:<26} {}  {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attnscale"))
}

// ---------------------------------------------------------------- sweep

struct Row {
    mechanism: String,
    seq_len: usize,
    latency_ms: f64,
    peak_bytes: f64,
}

struct Sweep {
    _dir: tempfile::TempDir,
    csv: PathBuf,
    rows: Vec<Row>,
}

/// Parsed by hand so the numbers below do not route through the library
/// under test.
fn read_rows(path: &Path) -> Vec<Row> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("mechanism,mode,seq_len,model_dim,heads,repeat,latency_ms,peak_bytes")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 8, "{l}");
            assert_eq!((f[3], f[4]), ("256", "4"));
            let natural = if matches!(f[0], "sa" | "fox") { "parallel" } else { "recurrent" };
            assert_eq!(f[1], natural, "{l}");
            Row {
                mechanism: f[0].into(),
                seq_len: f[2].parse().unwrap(),
                latency_ms: f[6].parse().unwrap(),
                peak_bytes: f[7].parse().unwrap(),
            }
        })
        .collect()
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("results.csv");
        let lengths: Vec<String> = SWEEP_LENGTHS.iter().map(ToString::to_string).collect();
        let out = bin()
            .args(["bench", "--lengths", &lengths.join(","), "--dim", "256", "--heads", "4"])
            .args(["--repeats", "5", "--seed", "42", "--out", csv.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = read_rows(&csv);
        Sweep { _dir: dir, csv, rows }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median (latency, peak) per length for one mechanism.
fn series(rows: &[Row], mechanism: &str) -> BTreeMap<usize, (f64, f64)> {
    let mut cells: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mechanism == mechanism) {
        let c = cells.entry(r.seq_len).or_default();
        c.0.push(r.latency_ms);
        c.1.push(r.peak_bytes);
    }
    cells.into_iter().map(|(l, (a, b))| (l, (median(a), median(b)))).collect()
}

/// (slope, r²) of ln t on ln L.
fn loglog(points: &BTreeMap<usize, (f64, f64)>) -> (f64, f64) {
    let xs: Vec<f64> = points.keys().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = points.values().map(|p| p.0.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

#[test]
fn criterion_01_scaling_separation() {
    let _g = serial();
    let rows = &sweep().rows;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ["sa", "retnet", "lightnet", "gsa", "kda"] {
        let s = series(rows, m);
        let complete = s.len() == SWEEP_LENGTHS.len();
        let (slope, r2) = loglog(&s);
        let ok = complete && r2 >= 0.95 && if m == "sa" { slope >= 1.6 } else { slope <= 1.25 };
        pass &= ok;
        parts.push(format!("{m} {slope:.3} (r2 {r2:.3}){}", if ok { "" } else { " !" }));
    }
    // The library's fit of the same file must agree with the one above.
    let lib = attnscale_bench::fit_records(&attnscale_bench::parse_csv(&sweep().csv).unwrap());
    let worst = lib
        .iter()
        .map(|f| {
            let (slope, r2) = loglog(&series(rows, f.target.kind.id()));
            (f.fit.slope - slope).abs().max((f.fit.r2 - r2).abs())
        })
        .fold(0.0, f64::max);
    pass &= lib.len() == 6 && worst <= 1e-9;
    verdict(
        1,
        "scaling separation",
        pass,
        &format!("slopes L=1024..16384: {}; library fit agreement {worst:.1e}", parts.join(", ")),
    );
}

#[test]
fn criterion_02_latency_ratio() {
    let _g = serial();
    let rows = &sweep().rows;
    let (sa, kda) = (series(rows, "sa"), series(rows, "kda"));
    let l = *sa.keys().filter(|l| kda.contains_key(l)).max().unwrap();
    let ratio = sa[&l].0 / kda[&l].0;
    verdict(
        2,
        "latency ratio SA/KDA",
        ratio >= 4.0,
        &format!("median SA {:.1} ms / KDA {:.1} ms at L={l} = {ratio:.2} (min 4)", sa[&l].0, kda[&l].0),
    );
}

#[test]
fn criterion_03_memory_growth() {
    let _g = serial();
    let rows = &sweep().rows;
    let sa = series(rows, "sa");
    let growth: Vec<f64> = sa.values().collect::<Vec<_>>().windows(2).map(|w| w[1].1 / w[0].1).collect();
    let growth_ok = growth.len() == 4 && growth.iter().all(|g| (3.5..=4.5).contains(g));
    let mut gaps = Vec::new();
    let mut gap_ok = true;
    for m in BOUNDED {
        let ratio = sa[&8192].1 / series(rows, m)[&8192].1;
        gap_ok &= ratio >= 10.0;
        gaps.push(format!("{m} {ratio:.0}x"));
    }
    verdict(
        3,
        "memory growth",
        growth_ok && gap_ok,
        &format!(
            "SA peak per doubling {growth:.3?} (range [3.5, 4.5]); SA over recurrent at L=8192: {} (min 10x)",
            gaps.join(", ")
        ),
    );
}

#[test]
fn criterion_04_fox_divergence_documented() {
    let _g = serial();
    let sw = sweep();
    let fox = series(&sw.rows, "fox");
    let (slope, r2) = loglog(&fox);
    let out = bin().args(["report", "--input", sw.csv.to_str().unwrap()]).output().unwrap();
    let report = String::from_utf8_lossy(&out.stdout);
    let noted = out.status.success() && report.contains("FoX") && report.contains("fused");
    verdict(
        4,
        "fox quadratic, noted",
        slope >= 1.6 && noted,
        &format!(
            "naive FoX slope {slope:.3} (r2 {r2:.3}, min 1.6); report carries the fused-kernel note: {noted}; \
             classification scores are out of scope and nothing depends on them"
        ),
    );
}

// ------------------------------------------------------ property criteria

fn verify_output() -> &'static String {
    static OUT: OnceLock<String> = OnceLock::new();
    OUT.get_or_init(|| {
        let out = bin().arg("verify").output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        assert_eq!(out.status.code(), Some(0), "verify failed:\n{text}");
        text
    })
}

/// Whether `verify` listed every named property as passing.
fn verify_passes(ids: &[&str]) -> bool {
    let out = verify_output();
    ids.iter().all(|id| {
        out.lines()
            .any(|l| l.starts_with("PASS") && l.split_whitespace().nth(1) == Some(*id))
    })
}

fn input(seed: u64, len: usize, dim: usize) -> Matrix {
    synth_features(&mut Rng::with_stream(seed, 7), len, &FeatureStats::standard(dim)).unwrap()
}

fn mech(kind: MechanismKind, dim: usize, heads: usize, seed: u64) -> Mechanism {
    Mechanism::new(kind, MechanismConfig::new(dim, heads).with_seed(seed)).unwrap()
}

#[test]
fn criterion_05_dual_form_equivalence() {
    let _g = serial();
    let mut worst: f64 = 0.0;
    for kind in [MechanismKind::RetNet, MechanismKind::LightNet] {
        for seed in 0..20 {
            let len = [64, 200, 333, 512][seed as usize % 4];
            let m = mech(kind, 128, 2, 1000 + seed);
            let u = input(seed, len, 128);
            let rec = m.forward(&u, ExecutionMode::Recurrent).unwrap();
            let par = m.forward(&u, ExecutionMode::Parallel).unwrap();
            worst = worst.max(par.max_abs_diff(&rec) / rec.max_abs());
        }
    }
    let v = verify_passes(&["dual-form-equivalence"]);
    verdict(
        5,
        "dual-form equivalence",
        worst <= 1e-6 && v,
        &format!("max relative l-inf {worst:.2e} over 40 runs, d=64, L<=512 (tol 1e-6); verify: {v}"),
    );
}

#[test]
fn criterion_06_fox_to_sa() {
    let _g = serial();
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let sa = mech(MechanismKind::Sa, 64, 4, seed);
        let mut fox = mech(MechanismKind::Fox, 64, 4, seed + 50);
        for (f, s) in fox.heads.iter_mut().zip(&sa.heads) {
            (f.w_q, f.w_k, f.w_v) = (s.w_q.clone(), s.w_k.clone(), s.w_v.clone());
            if let HeadExtra::Fox { b_f, .. } = &mut f.extra {
                *b_f = 1e4;
            }
        }
        fox.w_o = sa.w_o.clone();
        let u = input(seed, 256, 64);
        let d = fox
            .forward(&u, ExecutionMode::Parallel)
            .unwrap()
            .max_abs_diff(&sa.forward(&u, ExecutionMode::Parallel).unwrap());
        worst = worst.max(d);
    }
    let v = verify_passes(&["fox-to-sa-reduction"]);
    verdict(
        6,
        "fox to sa reduction",
        worst <= 1e-12 && v,
        &format!("max |fox - sa| {worst:.2e} at L=256 (tol 1e-12); verify: {v}"),
    );
}

#[test]
fn criterion_07_causality() {
    let _g = serial();
    let (mut rec, mut par): (f64, f64) = (0.0, 0.0);
    for kind in MechanismKind::ALL {
        for seed in 0..10u64 {
            let m = mech(kind, 32, 4, seed);
            let u = input(seed, 64, 32);
            let t = 1 + (seed as usize * 7) % 63;
            let mut w = u.clone();
            w.row_mut(t).iter_mut().for_each(|x| *x = 5.0 - *x);
            for mode in kind.modes() {
                let (a, b) = (m.forward(&u, mode).unwrap(), m.forward(&w, mode).unwrap());
                let d = a.slice_rows(0, t).max_abs_diff(&b.slice_rows(0, t));
                match mode {
                    ExecutionMode::Recurrent => rec = rec.max(d),
                    ExecutionMode::Parallel => par = par.max(d),
                }
            }
        }
    }
    let v = verify_passes(&["causality"]);
    verdict(
        7,
        "causality",
        rec == 0.0 && par <= 1e-10 && v,
        &format!("prefix change recurrent {rec:.1e} (exact), parallel {par:.1e} (tol 1e-10), 6 mechanisms x 10 seeds; verify: {v}"),
    );
}

#[test]
fn criterion_08_fold_equivalence() {
    let _g = serial();
    let mut exact = true;
    for kind in MechanismKind::BOUNDED {
        let m = mech(kind, 64, 4, 8);
        let u = input(8, 64, 64);
        let batch = m.forward(&u, ExecutionMode::Recurrent).unwrap();
        let mut st = m.fresh_state().unwrap();
        for t in 0..64 {
            exact &= m.step(&mut st, u.row(t)).unwrap() == batch.row(t);
        }
    }
    let v = verify_passes(&["fold-equivalence"]);
    verdict(8, "fold equivalence", exact && v, &format!("bit-identical at L=64 for 4 mechanisms: {exact}; verify: {v}"));
}

#[test]
fn criterion_09_bounded_state() {
    let _g = serial();
    let mut same = true;
    let mut parts = Vec::new();
    for kind in MechanismKind::BOUNDED {
        let m = Mechanism::new(kind, MechanismConfig::new(256, 4).with_slots(64)).unwrap();
        let u = input(9, 4096, 256);
        let mut counts = Vec::new();
        for len in [16, 4096] {
            let mut st = m.fresh_state().unwrap();
            for t in 0..len {
                m.step(&mut st, u.row(t)).unwrap();
            }
            counts.push(st.scalar_count());
        }
        same &= counts[0] == counts[1];
        parts.push(format!("{} {}/{}", kind.id(), counts[0], counts[1]));
    }
    let v = verify_passes(&["bounded-state"]);
    verdict(9, "bounded state", same && v, &format!("scalars at L=16/4096: {}; verify: {v}", parts.join(", ")));
}

#[test]
fn criterion_10_pooling() {
    let _g = serial();
    let mut rng = Rng::new(10);
    let mut sum_err: f64 = 0.0;
    for len in [1, 9, 123] {
        let h = math::gaussian_init(&mut rng, len, 16, 2.0).unwrap();
        let w = attention_weights(&h, &PoolingParams::init(&mut rng, 16).unwrap()).unwrap();
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let h = Matrix::from_rows(&[vec![2.0, -1.0], vec![4.0, 3.0], vec![-3.0, 7.0], vec![1.0, 0.0]]).unwrap();
    let mean = attention_pool(&h, &PoolingParams::new(vec![0.0, 0.0])).unwrap();
    let mean_ok = (mean[0] - 1.0).abs() < 1e-15 && (mean[1] - 2.25).abs() < 1e-15;
    let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let hand = attention_pool(&e, &PoolingParams::new(vec![2f64.sqrt() * 3f64.ln(), 0.0])).unwrap();
    let hand_ok = (hand[0] - 0.75).abs() < 1e-15 && (hand[1] - 0.25).abs() < 1e-15;
    let v = verify_passes(&["pool-weights-convex", "pool-mean-and-hand-example"]);
    verdict(
        10,
        "pooling",
        sum_err <= 1e-12 && mean_ok && hand_ok && v,
        &format!("|sum w - 1| {sum_err:.1e} (tol 1e-12); zero query gives mean {mean:?}; hand example {hand:?}; verify: {v}"),
    );
}

#[test]
fn criterion_11_degenerate_reductions() {
    let _g = serial();
    // GSA with retention gates at 0 reads the current value.
    let mut gsa = mech(MechanismKind::Gsa, 32, 2, 11);
    for h in &mut gsa.heads {
        if let HeadExtra::Gsa { b_alpha, .. } = &mut h.extra {
            b_alpha.iter_mut().for_each(|b| *b = -1e4);
        }
    }
    let u = input(11, 24, 32);
    let out = gsa.forward(&u, ExecutionMode::Recurrent).unwrap();
    let mut gsa_err: f64 = 0.0;
    for t in 0..24 {
        let concat: Vec<f64> = gsa
            .heads
            .iter()
            .flat_map(|h| (0..h.w_v.rows()).map(|r| h.w_v.row(r).iter().zip(u.row(t)).map(|(a, b)| a * b).sum::<f64>()).collect::<Vec<_>>())
            .collect();
        for r in 0..32 {
            let want: f64 = gsa.w_o.row(r).iter().zip(&concat).map(|(a, b)| a * b).sum();
            gsa_err = gsa_err.max((out.get(t, r) - want).abs());
        }
    }
    // KDA with zero write strength outputs zero.
    let mut kd = mech(MechanismKind::Kda, 32, 2, 11);
    for h in &mut kd.heads {
        if let HeadExtra::Kda { b_beta, .. } = &mut h.extra {
            *b_beta = -1e4;
        }
    }
    assert_eq!(logistic(-1e4), 0.0);
    let kda_zero = kd.forward(&u, ExecutionMode::Recurrent).unwrap().max_abs();
    // Orthonormal keys: reading k_1 returns v_1 exactly.
    let e = |i: usize| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let (mut s, mut key, mut delta, mut o) = (vec![0.0; 9], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
    let v1 = [3.0, -0.5, 1.25];
    kda::step_head(&mut s, &[1.0; 3], 1.0, &e(2), &e(0), &v1, &mut key, &mut delta, &mut o);
    kda::step_head(&mut s, &[1.0; 3], 1.0, &e(0), &e(1), &[8.0, 8.0, 8.0], &mut key, &mut delta, &mut o);
    let recall = o == v1;
    // RetNet decay ratio.
    let gamma = 1.0 - 2f64.powi(-6);
    let mut st = vec![0.0; 4];
    let mut out2 = vec![0.0; 2];
    let mut norms = Vec::new();
    for t in 0..30 {
        let (k, v) = if t == 2 { ([0.3, -0.7], [1.5, 2.5]) } else { ([0.0; 2], [0.0; 2]) };
        retnet::step_head(&mut st, gamma, &[0.0, 1.0], &k, &v, &mut out2);
        norms.push(out2.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let decay_err = (2..30).map(|t| (norms[t] / norms[2] - gamma.powi(t as i32 - 2)).abs()).fold(0.0, f64::max);
    let v = verify_passes(&[
        "gsa-no-retention-reads-value",
        "kda-no-write-outputs-zero",
        "kda-orthonormal-recall",
        "retnet-decay-ratio",
    ]);
    verdict(
        11,
        "degenerate reductions",
        gsa_err <= 1e-12 && kda_zero == 0.0 && recall && decay_err <= 1e-10 && v,
        &format!(
            "gsa alpha=0 err {gsa_err:.1e}; kda beta=0 max {kda_zero:.1e}; orthonormal recall exact: {recall}; \
             retnet decay err {decay_err:.1e} (tol 1e-10); verify: {v}"
        ),
    );
}

fn gate_size(g: &GateProjection) -> usize {
    match g {
        GateProjection::Full(w) => w.as_slice().len(),
        GateProjection::LowRank { down, up } => down.as_slice().len() + up.as_slice().len(),
    }
}

#[test]
fn criterion_12_parameter_parity() {
    let _g = serial();
    let counts: Vec<usize> = MechanismKind::ALL
        .iter()
        .map(|&k| {
            let m = Mechanism::new(k, MechanismConfig::new(256, 4).with_slots(64)).unwrap();
            // Count tensors directly instead of trusting the formula.
            let per_head: usize = m
                .heads
                .iter()
                .map(|h| {
                    let base = h.w_q.as_slice().len() + h.w_k.as_slice().len() + h.w_v.as_slice().len();
                    base + match &h.extra {
                        HeadExtra::None => 0,
                        HeadExtra::RetNet { .. } => 1,
                        HeadExtra::Fox { w_f, .. } => w_f.len() + 1,
                        HeadExtra::Gsa { w_alpha, b_alpha } => gate_size(w_alpha) + b_alpha.len(),
                        HeadExtra::Kda { w_a, b_a, w_beta, .. } => gate_size(w_a) + b_a.len() + w_beta.len() + 1,
                    }
                })
                .sum();
            let total = per_head + m.w_o.as_slice().len();
            assert_eq!(total, m.param_count(), "{k}");
            total
        })
        .collect();
    let ratio = *counts.iter().max().unwrap() as f64 / *counts.iter().min().unwrap() as f64;
    let v = verify_passes(&["parameter-parity"]);
    verdict(
        12,
        "parameter parity",
        ratio <= 1.15 && v,
        &format!("max/min {ratio:.4} (tol 1.15) over {counts:?}; verify: {v}"),
    );
}

#[test]
fn criterion_13_determinism() {
    let _g = serial();
    let demo = || {
        bin()
            .args(["demo", "--mechanism", "kda", "--seed", "13", "--speech-len", "120", "--text-len", "20", "--dim", "64"])
            .output()
            .unwrap()
            .stdout
    };
    let demo_same = demo() == demo();
    let workload_same = workload(13, "w", 100, 16).unwrap() == workload(13, "w", 100, 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let structure = |name: &str| {
        let p = dir.path().join(name);
        let ok = bin()
            .args(["bench", "--mechanisms", "sa,gsa", "--lengths", "16,32,64,128", "--dim", "32", "--heads", "2"])
            .args(["--repeats", "3", "--warmup", "0", "--seed", "5", "--out", p.to_str().unwrap()])
            .output()
            .unwrap()
            .status
            .success();
        assert!(ok);
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplitn(3, ',').nth(2).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    let csv_same = structure("a.csv") == structure("b.csv");
    let v = verify_passes(&["forward-determinism", "end-to-end-determinism", "bench-csv-determinism"]);
    let all_pass = !verify_output().contains("FAIL");
    verdict(
        13,
        "determinism",
        demo_same && workload_same && csv_same && v && all_pass,
        &format!(
            "demo repeats: {demo_same}; workloads repeat: {workload_same}; bench CSV structure repeats: {csv_same}; \
             verify exits 0 with no FAIL: {all_pass}"
        ),
    );
}
