use std::time::Instant;

use attnscale_core::pipeline::{synth_features, FeatureStats};
use attnscale_core::{Error, ExecutionMode, Mechanism, MechanismKind, Rng, SequenceTensor, Workspace};

use crate::config::{BenchConfig, BenchTarget};
use crate::error::Result;
use crate::fit::{fit_records, ScalingFit};
use crate::io::round_sig;

/// One timed repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub mechanism: MechanismKind,
    pub mode: ExecutionMode,
    pub seq_len: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub repeat: usize,
    /// Wall-clock milliseconds, stored at the 6 significant digits the
    /// CSV carries so that written and re-read records compare equal.
    pub latency_ms: f64,
    pub peak_bytes: u64,
}

impl BenchRecord {
    pub fn target(&self) -> BenchTarget {
        BenchTarget::new(self.mechanism, self.mode)
    }

    pub(crate) fn sort_key(&self) -> (BenchTarget, usize, usize) {
        (self.target(), self.seq_len, self.repeat)
    }
}

/// A length that was not measured.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchFailure {
    pub mechanism: MechanismKind,
    pub mode: ExecutionMode,
    pub seq_len: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub records: Vec<BenchRecord>,
    pub failures: Vec<BenchFailure>,
}

impl SweepResult {
    pub fn fits(&self) -> Vec<ScalingFit> {
        fit_records(&self.records)
    }
}

/// Progress notifications from [`run_sweep_with`].
#[derive(Debug, Clone, PartialEq)]
pub enum SweepEvent {
    Started { target: BenchTarget, seq_len: usize },
    Measured { target: BenchTarget, seq_len: usize, median_ms: f64, peak_bytes: u64 },
    Failed(BenchFailure),
}

fn draw_input(rng: &mut Rng, len: usize, dim: usize) -> Result<SequenceTensor> {
    Ok(synth_features(rng, len, &FeatureStats::standard(dim))?)
}

fn timed_forward(mech: &Mechanism, mode: ExecutionMode, u: &SequenceTensor) -> Result<(f64, u64)> {
    let ws = Workspace::new();
    let start = Instant::now();
    let out = mech.forward_with(u, mode, &ws)?;
    let elapsed = start.elapsed().as_secs_f64();
    drop(out);
    Ok((elapsed, ws.memory.peak() as u64))
}

/// Runs `warmup` untimed forwards, then `repeats` timed ones, each on a fresh
/// input drawn from `rng`. Returns seconds per timed repeat.
///
/// Only the forward call is inside the timed region; input synthesis and
/// parameter construction happen outside it.
pub fn measure_latency(
    mech: &Mechanism,
    mode: ExecutionMode,
    len: usize,
    repeats: usize,
    warmup: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    Ok(measure(mech, mode, len, repeats, warmup, rng)?
        .into_iter()
        .map(|(secs, _)| secs)
        .collect())
}

fn measure(
    mech: &Mechanism,
    mode: ExecutionMode,
    len: usize,
    repeats: usize,
    warmup: usize,
    rng: &mut Rng,
) -> Result<Vec<(f64, u64)>> {
    let dim = mech.config.model_dim;
    for _ in 0..warmup {
        let u = draw_input(rng, len, dim)?;
        timed_forward(mech, mode, &u)?;
    }
    (0..repeats)
        .map(|_| {
            let u = draw_input(rng, len, dim)?;
            timed_forward(mech, mode, &u)
        })
        .collect()
}

/// High-water mark of accounted scratch bytes during one forward.
pub fn measure_peak_memory(mech: &Mechanism, mode: ExecutionMode, len: usize, rng: &mut Rng) -> Result<u64> {
    let u = draw_input(rng, len, mech.config.model_dim)?;
    Ok(timed_forward(mech, mode, &u)?.1)
}

pub fn run_sweep(config: &BenchConfig) -> Result<SweepResult> {
    run_sweep_with(config, |_| {})
}

/// Runs the sweep sequentially. A length that exceeds the cap or cannot
/// allocate its working set becomes a failure row; larger lengths of the same
/// series are then skipped and the sweep moves on to the next series.
pub fn run_sweep_with(config: &BenchConfig, mut observe: impl FnMut(&SweepEvent)) -> Result<SweepResult> {
    config.validate()?;
    let mut result = SweepResult::default();
    let root = Rng::new(config.seed);
    for target in config.targets() {
        let mech = Mechanism::new(target.kind, config.mechanism_config())?;
        let mut blocked: Option<String> = None;
        for &len in &config.lengths {
            let fail = |reason: String| BenchFailure {
                mechanism: target.kind,
                mode: target.mode,
                seq_len: len,
                reason,
            };
            let reason = match (&blocked, config.max_length_cap) {
                (Some(r), _) => Some(format!("skipped after failure at shorter length ({r})")),
                (None, Some(cap)) if len > cap => Some(format!("exceeds max length cap {cap}")),
                _ => None,
            };
            if let Some(reason) = reason {
                let f = fail(reason);
                observe(&SweepEvent::Failed(f.clone()));
                result.failures.push(f);
                continue;
            }
            observe(&SweepEvent::Started { target, seq_len: len });
            let mut rng = root.child(&format!("{}/{len}", target.label()));
            match measure(&mech, target.mode, len, config.repeats, config.warmup, &mut rng) {
                Ok(runs) => {
                    let records: Vec<BenchRecord> = runs
                        .iter()
                        .enumerate()
                        .map(|(repeat, &(secs, peak))| BenchRecord {
                            mechanism: target.kind,
                            mode: target.mode,
                            seq_len: len,
                            model_dim: config.model_dim,
                            heads: config.num_heads,
                            repeat,
                            latency_ms: round_sig(secs * 1e3, 6),
                            peak_bytes: peak,
                        })
                        .collect();
                    let lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
                    observe(&SweepEvent::Measured {
                        target,
                        seq_len: len,
                        median_ms: crate::fit::median(&lat),
                        peak_bytes: records.iter().map(|r| r.peak_bytes).max().unwrap_or(0),
                    });
                    result.records.extend(records);
                }
                Err(crate::BenchError::Core(e @ Error::Allocation { .. })) => {
                    let f = fail(e.to_string());
                    observe(&SweepEvent::Failed(f.clone()));
                    result.failures.push(f);
                    blocked = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
    }
    result.records.sort_by_key(BenchRecord::sort_key);
    Ok(result)
}
