//! The invariant suite behind `attnscale verify`.

use std::cell::RefCell;
use std::collections::BTreeMap;

use anyhow::{ensure, Context};
use attnscale_bench::{
    emit_csv, fit_records, measure_latency, measure_peak_memory, median, parse_csv, run_sweep, summarize,
    BenchConfig, BenchRecord, ScalingClass,
};
use attnscale_core::math::{self, layer_norm, matmul, stable_softmax, LAYER_NORM_EPS};
use attnscale_core::mechanisms::{kda, lightnet, retnet, HeadExtra};
use attnscale_core::memory::{Diagnostics, MemoryAccountant};
use attnscale_core::pipeline::{
    length_adjust, model_forward, model_forward_streaming, synth_features, FeatureStats, ModelParams,
    PipelineConfig,
};
use attnscale_core::pooling::{attention_pool, attention_weights, predict, PoolingParams};
use attnscale_core::{ExecutionMode, Matrix, Mechanism, MechanismConfig, MechanismKind, Rng};
use clap::Parser;

use crate::args::{Cli, Fault};

use MechanismKind::{Fox, Gsa, Kda, LightNet, RetNet, Sa};

const ALL: &[MechanismKind] = &MechanismKind::ALL;
const BOUNDED: &[MechanismKind] = &MechanismKind::BOUNDED;

/// Lengths of the timed scaling sweep.
pub const TIMING_LENGTHS: [usize; 5] = [1024, 2048, 4096, 8192, 16384];

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub mechanism: Option<MechanismKind>,
    pub with_timing: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub id: &'static str,
    pub scope: &'static [MechanismKind],
    pub status: Status,
    pub detail: String,
}

impl std::fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let scope = match self.scope {
            [] => "-".to_string(),
            s if s.len() == ALL.len() => "all".to_string(),
            s => s.iter().map(|k| k.id()).collect::<Vec<_>>().join(","),
        };
        write!(f, "{}  {:<28} [{}]  {}", self.status.label(), self.id, scope, self.detail)
    }
}

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> anyhow::Result<Check> {
    Ok(Check {
        passed,
        detail: detail.into(),
    })
}

pub struct Property {
    pub id: &'static str,
    /// Mechanisms the property is about; empty for mechanism-agnostic ones.
    pub scope: &'static [MechanismKind],
    /// Depends on wall-clock measurements.
    pub timing: bool,
    run: fn(&Ctx) -> anyhow::Result<Check>,
}

const fn prop(
    id: &'static str,
    scope: &'static [MechanismKind],
    run: fn(&Ctx) -> anyhow::Result<Check>,
) -> Property {
    Property {
        id,
        scope,
        timing: false,
        run,
    }
}

const fn timed(
    id: &'static str,
    scope: &'static [MechanismKind],
    run: fn(&Ctx) -> anyhow::Result<Check>,
) -> Property {
    Property {
        id,
        scope,
        timing: true,
        run,
    }
}

/// Every property `verify` knows, in report order.
pub fn properties() -> Vec<Property> {
    vec![
        prop("softmax-sums-to-one", &[], softmax_sum),
        prop("softmax-shift-invariance", &[], softmax_shift),
        prop("layer-norm-moments", &[], layer_norm_moments),
        prop("matmul-associativity", &[], matmul_associativity),
        prop("gaussian-init-reproducible", &[], gaussian_init_reproducible),
        prop("causality", ALL, causality),
        prop("dual-form-equivalence", &[RetNet, LightNet], dual_form),
        prop("fold-equivalence", BOUNDED, fold_equivalence),
        prop("fox-to-sa-reduction", &[Sa, Fox], fox_to_sa),
        prop("bounded-state", BOUNDED, bounded_state),
        prop("lightnet-convexity", &[LightNet], lightnet_convexity),
        prop("retnet-decay-ratio", &[RetNet], retnet_decay),
        prop("gsa-no-retention-reads-value", &[Gsa], gsa_alpha_zero),
        prop("kda-no-write-outputs-zero", &[Kda], kda_beta_zero),
        prop("kda-orthonormal-recall", &[Kda], kda_orthonormal),
        prop("forward-determinism", ALL, forward_determinism),
        prop("parameter-parity", ALL, parameter_parity),
        prop("pool-weights-convex", &[], pool_convex),
        prop("pool-permutation-invariance", &[], pool_permutation),
        prop("pool-mean-and-hand-example", &[], pool_examples),
        prop("predict-shift-scale-invariance", &[], predict_invariance),
        prop("streaming-equals-batch", BOUNDED, streaming_equals_batch),
        prop("length-adjust-no-fabrication", &[], length_adjust_rows),
        prop("end-to-end-determinism", ALL, end_to_end_determinism),
        prop("sa-peak-memory-growth", &[Sa], sa_peak_growth),
        prop("retnet-peak-memory-flat", &[RetNet], retnet_peak_flat),
        prop("sa-peak-memory-dominance", ALL, sa_peak_dominance),
        prop("bench-csv-determinism", &[], csv_determinism),
        prop("report-reproduces-fits", &[], report_reproduces_fits),
        prop("help-exits-zero", &[], help_exits_zero),
        prop("fault-injection-detected", &[RetNet], fault_injection_detected),
        timed("sa-latency-monotone", &[Sa], sa_latency_monotone),
        timed("latency-scaling-exponents", ALL, latency_scaling),
        timed("sa-kda-latency-ratio", &[Sa, Kda], sa_kda_ratio),
    ]
}

struct Ctx {
    /// Scope of the running property, narrowed by the mechanism filter.
    kinds: Vec<MechanismKind>,
    seed: u64,
    fault: Option<Fault>,
    sweeps: RefCell<BTreeMap<MechanismKind, Vec<BenchRecord>>>,
}

impl Ctx {
    fn has(&self, kind: MechanismKind) -> bool {
        self.kinds.contains(&kind)
    }

    fn bounded(&self) -> Vec<MechanismKind> {
        self.kinds.iter().copied().filter(|k| k.is_bounded()).collect()
    }

    /// Deterministic workload tensor for a labelled purpose.
    fn input(&self, label: &str, len: usize, dim: usize) -> anyhow::Result<Matrix> {
        Ok(workload(self.seed, label, len, dim)?)
    }

    fn rng(&self, label: &str) -> Rng {
        Rng::new(self.seed).child(label)
    }

    /// Timed sweep records for the given mechanisms, measured once per run.
    fn sweep(&self, kinds: &[MechanismKind]) -> anyhow::Result<Vec<BenchRecord>> {
        let missing: Vec<MechanismKind> = kinds
            .iter()
            .copied()
            .filter(|k| !self.sweeps.borrow().contains_key(k))
            .collect();
        if !missing.is_empty() {
            let cfg = BenchConfig {
                mechanisms: missing.clone(),
                lengths: TIMING_LENGTHS.to_vec(),
                seed: self.seed,
                ..BenchConfig::default()
            };
            let result = run_sweep(&cfg)?;
            ensure!(result.failures.is_empty(), "sweep failures: {:?}", result.failures);
            let mut cache = self.sweeps.borrow_mut();
            for k in missing {
                cache.insert(k, result.records.iter().filter(|r| r.mechanism == k).cloned().collect());
            }
        }
        let cache = self.sweeps.borrow();
        Ok(kinds.iter().flat_map(|k| cache[k].iter().cloned()).collect())
    }
}

/// The input generator shared by every property: standard-normal features
/// from a stream derived from `seed` and `label`.
pub fn workload(seed: u64, label: &str, len: usize, dim: usize) -> attnscale_core::Result<Matrix> {
    synth_features(&mut Rng::new(seed).child(label), len, &FeatureStats::standard(dim))
}

fn mechanism(kind: MechanismKind, dim: usize, heads: usize, seed: u64) -> anyhow::Result<Mechanism> {
    Ok(Mechanism::new(kind, MechanismConfig::new(dim, heads).with_seed(seed))?)
}

fn row_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the suite, reporting each property as it finishes.
pub fn run_verify(options: &VerifyOptions, mut observe: impl FnMut(&PropertyReport)) -> Vec<PropertyReport> {
    let mut reports = Vec::new();
    let sweeps = RefCell::new(BTreeMap::new());
    for p in properties() {
        let kinds: Vec<MechanismKind> = match options.mechanism {
            Some(m) if p.scope.contains(&m) => vec![m],
            Some(_) => continue,
            None if p.scope.is_empty() => ALL.to_vec(),
            None => p.scope.to_vec(),
        };
        let report = if p.timing && !options.with_timing {
            PropertyReport {
                id: p.id,
                scope: p.scope,
                status: Status::Skip,
                detail: "wall-clock property; run with --with-timing".into(),
            }
        } else {
            let ctx = Ctx {
                kinds,
                seed: options.seed,
                fault: options.fault,
                sweeps: RefCell::new(std::mem::take(&mut *sweeps.borrow_mut())),
            };
            let outcome = (p.run)(&ctx);
            *sweeps.borrow_mut() = ctx.sweeps.into_inner();
            let (status, detail) = match outcome {
                Ok(c) if c.passed => (Status::Pass, c.detail),
                Ok(c) => (Status::Fail, c.detail),
                Err(e) => (Status::Fail, format!("error: {e:#}")),
            };
            PropertyReport {
                id: p.id,
                scope: p.scope,
                status,
                detail,
            }
        };
        observe(&report);
        reports.push(report);
    }
    reports
}

// ---- numeric primitives ----

fn softmax_sum(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("softmax-sum");
    let mut worst: f64 = 0.0;
    for len in [1, 7, 1000, 100_000] {
        let x: Vec<f64> = (0..len).map(|_| 30.0 * rng.standard_normal()).collect();
        let p = stable_softmax(&x)?;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    check(worst <= 1e-12, format!("max |sum - 1| = {worst:.2e} (tol 1e-12), lengths up to 1e5"))
}

fn softmax_shift(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("softmax-shift");
    let mut worst: f64 = 0.0;
    for c in [-1e4, -123.25, 0.5, 987.0, 1e4] {
        let x: Vec<f64> = (0..64).map(|_| 3.0 * rng.standard_normal()).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        worst = worst.max(row_diff(&stable_softmax(&x)?, &stable_softmax(&shifted)?));
    }
    check(worst <= 1e-12, format!("max elementwise diff {worst:.2e} for |c| <= 1e4 (tol 1e-12)"))
}

fn layer_norm_moments(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("layer-norm");
    let (mut mean_err, mut var_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let x: Vec<f64> = (0..256).map(|_| 4.0 + 10.0 * rng.standard_normal()).collect();
        let y = layer_norm(&x, &[1.0; 256], &[0.0; 256], LAYER_NORM_EPS)?;
        let m = y.iter().sum::<f64>() / 256.0;
        let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 256.0;
        mean_err = mean_err.max(m.abs());
        var_err = var_err.max((v - 1.0).abs());
    }
    check(
        mean_err <= 1e-10 && var_err <= 1e-6,
        format!("max |mean| {mean_err:.2e} (tol 1e-10), max |var - 1| {var_err:.2e} (tol 1e-6)"),
    )
}

fn matmul_associativity(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("matmul");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = math::gaussian_init(&mut rng, 32, 32, 1.0)?;
        let b = math::gaussian_init(&mut rng, 32, 32, 1.0)?;
        let c = math::gaussian_init(&mut rng, 32, 32, 1.0)?;
        let left = matmul(&matmul(&a, &b)?, &c)?;
        let right = matmul(&a, &matmul(&b, &c)?)?;
        worst = worst.max(left.max_abs_diff(&right) / right.max_abs());
    }
    check(worst <= 1e-8, format!("max relative diff {worst:.2e} on 32x32 (tol 1e-8)"))
}

fn gaussian_init_reproducible(ctx: &Ctx) -> anyhow::Result<Check> {
    let a = math::gaussian_init(&mut ctx.rng("init"), 64, 64, 0.5)?;
    let b = math::gaussian_init(&mut ctx.rng("init"), 64, 64, 0.5)?;
    let c = math::gaussian_init(&mut ctx.rng("init-other"), 64, 64, 0.5)?;
    check(a == b && a != c, format!("same seed identical: {}, other stream differs: {}", a == b, a != c))
}

// ---- mechanisms ----

fn causality(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut worst: BTreeMap<ExecutionMode, f64> = BTreeMap::new();
    let mut runs = 0;
    let mut visible = true;
    for &kind in &ctx.kinds {
        for seed in 0..10u64 {
            let mech = mechanism(kind, 32, 4, seed)?;
            let u = ctx.input(&format!("causality/{seed}"), 64, 32)?;
            let t = 1 + Rng::new(seed).child("cut").below(63);
            let mut changed = u.clone();
            for x in changed.row_mut(t) {
                *x = 2.0 - 3.0 * *x;
            }
            for mode in kind.modes() {
                let base = mech.forward(&u, mode)?;
                let out = mech.forward(&changed, mode)?;
                let d = (0..t).map(|s| row_diff(base.row(s), out.row(s))).fold(0.0, f64::max);
                let e = worst.entry(mode).or_insert(0.0);
                *e = e.max(d);
                visible &= base.row(t) != out.row(t);
                runs += 1;
            }
        }
    }
    let rec = worst.get(&ExecutionMode::Recurrent).copied().unwrap_or(0.0);
    let par = worst.get(&ExecutionMode::Parallel).copied().unwrap_or(0.0);
    check(
        rec == 0.0 && par <= 1e-10 && visible,
        format!(
            "max prefix change: recurrent {rec:.2e} (must be 0), parallel {par:.2e} (tol 1e-10); \
             perturbation visible at its own position: {visible}; {runs} runs at L=64"
        ),
    )
}

fn dual_form_worst(ctx: &Ctx, kinds: &[MechanismKind], fault: bool) -> anyhow::Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for &kind in kinds {
        for seed in 0..20u64 {
            let len = [32, 128, 256, 512][seed as usize % 4];
            let mech = mechanism(kind, 128, 2, seed)?;
            let u = ctx.input(&format!("dual/{seed}"), len, 128)?;
            let rec = mech.forward(&u, ExecutionMode::Recurrent)?;
            let mut par_mech = mech.clone();
            if fault {
                for head in &mut par_mech.heads {
                    if let HeadExtra::RetNet { gamma } = &mut head.extra {
                        *gamma *= 1.0 - 1e-3;
                    }
                }
            }
            let par = par_mech.forward(&u, ExecutionMode::Parallel)?;
            worst = worst.max(par.max_abs_diff(&rec) / rec.max_abs().max(f64::MIN_POSITIVE));
            runs += 1;
        }
    }
    Ok((worst, runs))
}

fn dual_form(ctx: &Ctx) -> anyhow::Result<Check> {
    let fault = ctx.fault == Some(Fault::RetnetGamma);
    let (worst, runs) = dual_form_worst(ctx, &ctx.kinds, fault)?;
    check(
        worst <= 1e-6,
        format!("max relative l-inf diff {worst:.2e} over {runs} runs, L <= 512, d = 64 (tol 1e-6)"),
    )
}

fn fault_injection_detected(ctx: &Ctx) -> anyhow::Result<Check> {
    let (worst, _) = dual_form_worst(ctx, &[RetNet], true)?;
    check(
        worst > 1e-6,
        format!("perturbed decay gives relative diff {worst:.2e}, which the dual-form check rejects"),
    )
}

fn fold_equivalence(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut mismatches = Vec::new();
    for kind in ctx.bounded() {
        let mech = mechanism(kind, 64, 4, ctx.seed)?;
        let u = ctx.input("fold", 64, 64)?;
        let batch = mech.forward(&u, ExecutionMode::Recurrent)?;
        let mut state = mech.fresh_state()?;
        for t in 0..64 {
            if mech.step(&mut state, u.row(t))? != batch.row(t) {
                mismatches.push(format!("{}@{t}", kind.id()));
                break;
            }
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "step fold is bit-identical to recurrent forward at L=64".to_string()
        } else {
            format!("first mismatches: {}", mismatches.join(", "))
        },
    )
}

fn fox_to_sa(ctx: &Ctx) -> anyhow::Result<Check> {
    let sa = mechanism(Sa, 64, 4, ctx.seed)?;
    let mut fox = mechanism(Fox, 64, 4, ctx.seed ^ 0x5a5a)?;
    for (f, s) in fox.heads.iter_mut().zip(&sa.heads) {
        f.w_q = s.w_q.clone();
        f.w_k = s.w_k.clone();
        f.w_v = s.w_v.clone();
        if let HeadExtra::Fox { b_f, .. } = &mut f.extra {
            *b_f = 1e4;
        }
    }
    fox.w_o = sa.w_o.clone();
    let u = ctx.input("fox-sa", 256, 64)?;
    let d = fox
        .forward(&u, ExecutionMode::Parallel)?
        .max_abs_diff(&sa.forward(&u, ExecutionMode::Parallel)?);
    check(d <= 1e-12, format!("max |fox - sa| = {d:.2e} with gates forced to 1, L=256 (tol 1e-12)"))
}

fn bounded_state(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut details = Vec::new();
    let mut ok = true;
    for kind in ctx.bounded() {
        let mech = Mechanism::new(kind, MechanismConfig::default().with_seed(ctx.seed))?;
        let u = ctx.input("bounded", 4096, mech.config.model_dim)?;
        let mut counts = Vec::new();
        for len in [16, 4096] {
            let mut st = mech.fresh_state()?;
            for t in 0..len {
                mech.step(&mut st, u.row(t))?;
            }
            counts.push(st.scalar_count());
        }
        ok &= counts[0] == counts[1];
        details.push(format!("{} {}/{}", kind.id(), counts[0], counts[1]));
    }
    check(ok, format!("state scalars at L=16/L=4096: {}", details.join(", ")))
}

fn lightnet_convexity(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("convexity");
    let (len, d) = (48, 8);
    let (mut sum_err, mut fit_err, mut neg): (f64, f64, bool) = (0.0, 0.0, false);
    let mut outside = 0;
    for _ in 0..10 {
        let q: Vec<f64> = (0..len * d).map(|_| rng.standard_normal().abs()).collect();
        let k: Vec<f64> = (0..len * d).map(|_| 3.0 * rng.standard_normal()).collect();
        let v: Vec<f64> = (0..len * d).map(|_| rng.standard_normal()).collect();
        let mut out = vec![0.0; len * d];
        lightnet::parallel_head(&q, &k, &v, len, d, &MemoryAccountant::new(), &Diagnostics::default(), &mut out)?;
        for t in 0..len {
            let w: Vec<f64> = (0..=t)
                .map(|s| (0..d).map(|j| q[t * d + j] * k[s * d + j].exp()).sum::<f64>())
                .collect();
            let total: f64 = w.iter().sum();
            neg |= w.iter().any(|x| *x < 0.0);
            sum_err = sum_err.max((w.iter().map(|x| x / total).sum::<f64>() - 1.0).abs());
            for j in 0..d {
                let expect: f64 = (0..=t).map(|s| w[s] / total * v[s * d + j]).sum();
                fit_err = fit_err.max((out[t * d + j] - expect).abs());
                let col = (0..=t).map(|s| v[s * d + j]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                if out[t * d + j] < lo - 1e-10 || out[t * d + j] > hi + 1e-10 {
                    outside += 1;
                }
            }
        }
    }
    check(
        !neg && sum_err <= 1e-10 && fit_err <= 1e-10 && outside == 0,
        format!(
            "weights nonnegative: {}, |sum - 1| {sum_err:.2e}, output vs weighted values {fit_err:.2e} \
             (tol 1e-10), entries outside hull: {outside}",
            !neg
        ),
    )
}

fn retnet_decay(ctx: &Ctx) -> anyhow::Result<Check> {
    let mech = mechanism(RetNet, 64, 4, ctx.seed)?;
    let mut rng = ctx.rng("decay");
    let d = mech.config.head_dim();
    let mut worst: f64 = 0.0;
    for head in &mech.heads {
        let HeadExtra::RetNet { gamma } = head.extra else { anyhow::bail!("not a retention head") };
        let s_pos = 3;
        let key: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let val: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let mut q = vec![0.0; d];
        q[0] = 1.0;
        let mut state = vec![0.0; d * d];
        let mut out = vec![0.0; d];
        let zero = vec![0.0; d];
        let mut at_s = 0.0;
        for t in 0..40 {
            let (k, v) = if t == s_pos { (&key, &val) } else { (&zero, &zero) };
            retnet::step_head(&mut state, gamma, &q, k, v, &mut out);
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if t == s_pos {
                at_s = norm;
            } else if t > s_pos {
                worst = worst.max((norm / at_s - gamma.powi(t - s_pos)).abs());
            }
        }
    }
    check(worst <= 1e-10, format!("max |ratio - gamma^(t-s)| = {worst:.2e} over 4 heads (tol 1e-10)"))
}

fn gsa_alpha_zero(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut mech = mechanism(Gsa, 32, 2, ctx.seed)?;
    for head in &mut mech.heads {
        if let HeadExtra::Gsa { b_alpha, .. } = &mut head.extra {
            b_alpha.iter_mut().for_each(|b| *b = -1e4);
        }
    }
    let u = ctx.input("gsa-alpha", 32, 32)?;
    let out = mech.forward(&u, ExecutionMode::Recurrent)?;
    // Expected: W_o applied to the concatenated per-head values.
    let mut expect = Matrix::zeros(32, 32);
    for t in 0..32 {
        let concat: Vec<f64> = mech
            .heads
            .iter()
            .flat_map(|h| (0..h.w_v.rows()).map(|r| math::dot(h.w_v.row(r), u.row(t))).collect::<Vec<_>>())
            .collect();
        for r in 0..32 {
            let v = math::dot(mech.w_o.row(r), &concat);
            expect.set(t, r, v);
        }
    }
    let d = out.max_abs_diff(&expect);
    check(d <= 1e-12, format!("max |o_t - W_o v_t| = {d:.2e} with retention gates at 0 (tol 1e-12)"))
}

fn kda_beta_zero(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut mech = mechanism(Kda, 32, 2, ctx.seed)?;
    for head in &mut mech.heads {
        if let HeadExtra::Kda { b_beta, .. } = &mut head.extra {
            *b_beta = -1e4;
        }
    }
    let out = mech.forward(&ctx.input("kda-beta", 32, 32)?, ExecutionMode::Recurrent)?;
    check(out.max_abs() == 0.0, format!("max |o_t| = {:.2e} with write strength 0", out.max_abs()))
}

fn kda_orthonormal(_ctx: &Ctx) -> anyhow::Result<Check> {
    let d = 4;
    let e = |i: usize| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let v1 = [0.5, -1.25, 2.0, 3.5];
    let mut s = vec![0.0; d * d];
    let (mut key, mut delta, mut o) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    kda::step_head(&mut s, &[1.0; 4], 1.0, &e(1), &e(0), &v1, &mut key, &mut delta, &mut o);
    kda::step_head(&mut s, &[1.0; 4], 1.0, &e(0), &e(1), &[9.0; 4], &mut key, &mut delta, &mut o);
    check(o == v1, format!("query k_1 after writing (k_1, v_1), (k_2, v_2) returns {o:?}"))
}

fn forward_determinism(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut bad = Vec::new();
    for &kind in &ctx.kinds {
        let u = ctx.input("determinism", 48, 32)?;
        let a = mechanism(kind, 32, 4, ctx.seed)?.forward(&u, kind.default_mode())?;
        let b = mechanism(kind, 32, 4, ctx.seed)?.forward(&u, kind.default_mode())?;
        if a != b {
            bad.push(kind.id());
        }
    }
    check(bad.is_empty(), format!("non-identical repeats: {bad:?}"))
}

fn parameter_parity(_ctx: &Ctx) -> anyhow::Result<Check> {
    let config = MechanismConfig::new(256, 4).with_slots(64);
    let counts = ALL
        .iter()
        .map(|&k| Ok((k, Mechanism::new(k, config)?.param_count())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let max = counts.iter().map(|c| c.1).max().unwrap() as f64;
    let min = counts.iter().map(|c| c.1).min().unwrap() as f64;
    let list: Vec<String> = counts.iter().map(|(k, c)| format!("{} {c}", k.id())).collect();
    check(
        max / min <= 1.15,
        format!("max/min = {:.4} (tol 1.15) at D=256, H=4, m=64: {}", max / min, list.join(", ")),
    )
}

// ---- pooling and pipeline ----

fn pool_convex(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("pool-convex");
    let (mut sum_err, mut outside): (f64, usize) = (0.0, 0);
    for len in [1, 5, 40, 300] {
        let h = math::gaussian_init(&mut rng, len, 16, 2.0)?;
        let params = PoolingParams::init(&mut rng, 16)?;
        let w = attention_weights(&h, &params)?;
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
        outside += w.iter().filter(|x| **x < 0.0).count();
        let c = attention_pool(&h, &params)?;
        for (j, cj) in c.iter().enumerate() {
            let lo = (0..len).map(|t| h.get(t, j)).fold(f64::INFINITY, f64::min);
            let hi = (0..len).map(|t| h.get(t, j)).fold(f64::NEG_INFINITY, f64::max);
            if *cj < lo - 1e-12 || *cj > hi + 1e-12 {
                outside += 1;
            }
        }
    }
    check(
        sum_err <= 1e-12 && outside == 0,
        format!("max |sum w - 1| {sum_err:.2e} (tol 1e-12), violations of the hull: {outside}"),
    )
}

fn pool_permutation(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("pool-perm");
    let h = math::gaussian_init(&mut rng, 50, 16, 1.0)?;
    let params = PoolingParams::init(&mut rng, 16)?;
    let mut order: Vec<usize> = (0..50).collect();
    for i in (1..50).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let shuffled = Matrix::from_rows(&order.iter().map(|&i| h.row(i).to_vec()).collect::<Vec<_>>())?;
    let d = row_diff(&attention_pool(&h, &params)?, &attention_pool(&shuffled, &params)?);
    check(d <= 1e-12, format!("max change under row permutation {d:.2e} (tol 1e-12)"))
}

fn pool_examples(_ctx: &Ctx) -> anyhow::Result<Check> {
    let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let q = PoolingParams::new(vec![2f64.sqrt() * 3f64.ln(), 0.0]);
    let c = attention_pool(&h, &q)?;
    let hand = row_diff(&c, &[0.75, 0.25]);
    let g = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0], vec![5.0, 8.0]])?;
    let mean = row_diff(&attention_pool(&g, &PoolingParams::new(vec![0.0, 0.0]))?, &[3.0, 2.0]);
    check(
        hand <= 1e-15 && mean <= 1e-15,
        format!("hand example gives {c:?} (expected [0.75, 0.25]); zero query vs row mean diff {mean:.2e}"),
    )
}

fn predict_invariance(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("predict");
    let mut changed = 0;
    for _ in 0..200 {
        let logits: [f64; 8] = std::array::from_fn(|_| 5.0 * rng.standard_normal());
        let shift = 100.0 * rng.standard_normal();
        let scale = (3.0 * rng.standard_normal()).exp();
        let p = predict(&logits);
        if predict(&logits.map(|x| x + shift)) != p || predict(&logits.map(|x| x * scale)) != p {
            changed += 1;
        }
    }
    check(changed == 0, format!("{changed} of 200 random logit vectors changed class under shift or scale"))
}

fn pipeline_config(kind: MechanismKind, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(kind, 64, seed);
    cfg.speech_len = 48;
    cfg.text_len = 16;
    cfg
}

fn streaming_equals_batch(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut bad = Vec::new();
    for kind in ctx.bounded() {
        let cfg = pipeline_config(kind, ctx.seed);
        let params = ModelParams::init(&cfg)?;
        let (s, e) = cfg.synth_inputs()?;
        if model_forward(&s, &e, &params, ExecutionMode::Recurrent)? != model_forward_streaming(&s, &e, &params)? {
            bad.push(kind.id());
        }
    }
    check(bad.is_empty(), format!("token-by-token logits differ from batch for: {bad:?}"))
}

fn length_adjust_rows(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut rng = ctx.rng("length-adjust");
    let mut fabricated = 0;
    for (rows, target) in [(10, 3), (10, 10), (3, 11), (1, 7), (50, 49)] {
        let src = workload(ctx.seed, &format!("adjust/{rows}"), rows, 4)?;
        let out = length_adjust(&src, target, &mut rng)?;
        ensure!(out.rows() == target, "wrong length");
        fabricated += out.iter_rows().filter(|r| !src.iter_rows().any(|s| s == *r)).count();
    }
    check(fabricated == 0, format!("{fabricated} output rows are not copies of input rows"))
}

fn end_to_end_determinism(ctx: &Ctx) -> anyhow::Result<Check> {
    let mut bad = Vec::new();
    for &kind in &ctx.kinds {
        let run = || -> anyhow::Result<_> {
            let cfg = pipeline_config(kind, ctx.seed);
            let (s, e) = cfg.synth_inputs()?;
            let p = model_forward(&s, &e, &ModelParams::init(&cfg)?, cfg.mode)?;
            Ok((s, e, p))
        };
        if run()? != run()? {
            bad.push(kind.id());
        }
    }
    let same_workload = workload(ctx.seed, "w", 32, 8)? == workload(ctx.seed, "w", 32, 8)?;
    check(
        bad.is_empty() && same_workload,
        format!("inputs and logits repeat bit-for-bit: {}; workload generator repeats: {same_workload}", bad.is_empty()),
    )
}

// ---- memory accounting ----

fn peak(kind: MechanismKind, mode: ExecutionMode, len: usize, seed: u64) -> anyhow::Result<u64> {
    let mech = Mechanism::new(kind, MechanismConfig::default().with_seed(seed))?;
    Ok(measure_peak_memory(&mech, mode, len, &mut Rng::new(seed).child("peak"))?)
}

fn sa_peak_growth(ctx: &Ctx) -> anyhow::Result<Check> {
    let peaks = [1024, 2048, 4096]
        .iter()
        .map(|&l| peak(Sa, ExecutionMode::Parallel, l, ctx.seed))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ratios: Vec<f64> = peaks.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    check(
        ratios.iter().all(|r| (3.5..=4.5).contains(r)),
        format!("peak ratio per doubling {ratios:.3?} for L=1024..4096 (range [3.5, 4.5])"),
    )
}

fn retnet_peak_flat(ctx: &Ctx) -> anyhow::Result<Check> {
    let a = peak(RetNet, ExecutionMode::Recurrent, 1024, ctx.seed)?;
    let b = peak(RetNet, ExecutionMode::Recurrent, 8192, ctx.seed)?;
    let rel = (b as f64 - a as f64).abs() / a as f64;
    check(rel <= 0.1, format!("recurrent peak {a} B at L=1024, {b} B at L=8192 (change {rel:.3}, tol 0.1)"))
}

fn sa_peak_dominance(ctx: &Ctx) -> anyhow::Result<Check> {
    let others = ctx.bounded();
    if others.is_empty() && !ctx.has(Sa) {
        return check(true, "no recurrent mechanism in scope");
    }
    let others = if others.is_empty() { BOUNDED.to_vec() } else { others };
    let sa = peak(Sa, ExecutionMode::Parallel, 8192, ctx.seed)?;
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for kind in others {
        let p = peak(kind, ExecutionMode::Recurrent, 8192, ctx.seed)?;
        let r = sa as f64 / p as f64;
        worst = worst.min(r);
        parts.push(format!("{} {r:.0}x", kind.id()));
    }
    check(worst >= 10.0, format!("SA peak over recurrent peaks at L=8192: {} (min 10x)", parts.join(", ")))
}

// ---- bench plumbing ----

fn small_sweep(seed: u64) -> BenchConfig {
    BenchConfig {
        mechanisms: vec![Sa, Kda],
        lengths: vec![16, 32, 64, 128],
        model_dim: 32,
        num_heads: 2,
        slots: 8,
        repeats: 3,
        warmup: 0,
        seed,
        ..BenchConfig::default()
    }
}

/// CSV text with the measured columns blanked out.
fn csv_structure(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() == 8 && f[0] != "mechanism" {
                f[6] = "_";
                f[7] = "_";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn csv_determinism(ctx: &Ctx) -> anyhow::Result<Check> {
    let dir = tempfile::tempdir()?;
    let cfg = small_sweep(ctx.seed);
    let mut texts = Vec::new();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let result = run_sweep(&cfg)?;
        let path = dir.path().join(format!("run{i}.csv"));
        emit_csv(&result.records, &result.fits(), &path)?;
        texts.push(csv_structure(&std::fs::read_to_string(&path)?));
        // Identical records must give identical bytes.
        let again = dir.path().join(format!("again{i}.csv"));
        emit_csv(&result.records, &result.fits(), &again)?;
        bytes.push(std::fs::read(&path)? == std::fs::read(&again)?);
    }
    let rows = texts[0].lines().count() - 1;
    check(
        texts[0] == texts[1] && bytes.iter().all(|b| *b),
        format!(
            "row structure identical across sweeps: {} ({rows} rows); same records give identical bytes: {}",
            texts[0] == texts[1],
            bytes.iter().all(|b| *b)
        ),
    )
}

fn report_reproduces_fits(ctx: &Ctx) -> anyhow::Result<Check> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("results.csv");
    let result = run_sweep(&small_sweep(ctx.seed))?;
    let fits = result.fits();
    emit_csv(&result.records, &fits, &path)?;
    let parsed = parse_csv(&path).context("parsing emitted CSV")?;
    let again = summarize(&parsed).fits;
    ensure!(again.len() == fits.len(), "fit count changed on re-read");
    let worst = fits
        .iter()
        .zip(&again)
        .map(|(a, b)| (a.fit.slope - b.fit.slope).abs().max((a.fit.r2 - b.fit.r2).abs()))
        .fold(0.0, f64::max);
    check(
        parsed == result.records && worst <= 1e-9,
        format!("records round-trip exactly: {}; max fit difference {worst:.2e} (tol 1e-9)", parsed == result.records),
    )
}

fn help_exits_zero(_ctx: &Ctx) -> anyhow::Result<Check> {
    let mut bad = Vec::new();
    for args in [
        vec!["attnscale", "--help"],
        vec!["attnscale", "bench", "--help"],
        vec!["attnscale", "verify", "--help"],
        vec!["attnscale", "demo", "--help"],
        vec!["attnscale", "report", "--help"],
    ] {
        match Cli::try_parse_from(&args) {
            Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp && e.exit_code() == 0 => {}
            _ => bad.push(args[1..].join(" ")),
        }
    }
    check(bad.is_empty(), format!("help requests not answered with usage and exit 0: {bad:?}"))
}

// ---- wall clock ----

fn sa_latency_monotone(ctx: &Ctx) -> anyhow::Result<Check> {
    let mech = Mechanism::new(Sa, MechanismConfig::default().with_seed(ctx.seed))?;
    let mut rng = ctx.rng("monotone");
    let a = median(&measure_latency(&mech, ExecutionMode::Parallel, 512, 5, 2, &mut rng)?);
    let b = median(&measure_latency(&mech, ExecutionMode::Parallel, 2048, 5, 2, &mut rng)?);
    check(b > a, format!("median {:.3} ms at L=512, {:.3} ms at L=2048", a * 1e3, b * 1e3))
}

fn latency_scaling(ctx: &Ctx) -> anyhow::Result<Check> {
    let records = ctx.sweep(&ctx.kinds)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in fit_records(&records) {
        let want = if f.target.kind.is_bounded() { ScalingClass::Linear } else { ScalingClass::Quadratic };
        let pass = f.fit.class == want && f.fit.r2 >= 0.95;
        ok &= pass;
        parts.push(format!("{} {:.3} (r2 {:.3}){}", f.target.kind.id(), f.fit.slope, f.fit.r2, if pass { "" } else { " !" }));
    }
    check(
        ok,
        format!("log-log slopes over L=1024..16384 (bounded <= 1.25, SA/FoX >= 1.6, r2 >= 0.95): {}", parts.join(", ")),
    )
}

fn sa_kda_ratio(ctx: &Ctx) -> anyhow::Result<Check> {
    let records = ctx.sweep(&[Sa, Kda])?;
    let summary = summarize(&records);
    let r = summary
        .ratios
        .iter()
        .find(|r| r.other.kind == Kda)
        .context("no common length for SA and KDA")?;
    check(
        r.latency_ratio >= 4.0,
        format!("median SA / KDA latency at L={} is {:.2} (min 4)", r.seq_len, r.latency_ratio),
    )
}
