use std::collections::BTreeMap;

use crate::config::BenchTarget;
use crate::error::{BenchError, Result};
use crate::measure::BenchRecord;

/// Slopes at or below this are classed linear.
pub const LINEAR_MAX_SLOPE: f64 = 1.25;
/// Slopes at or above this are classed quadratic.
pub const QUADRATIC_MIN_SLOPE: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingClass {
    Linear,
    Quadratic,
    Indeterminate,
}

impl ScalingClass {
    pub fn from_slope(slope: f64) -> Self {
        if slope <= LINEAR_MAX_SLOPE {
            ScalingClass::Linear
        } else if slope >= QUADRATIC_MIN_SLOPE {
            ScalingClass::Quadratic
        } else {
            ScalingClass::Indeterminate
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ScalingClass::Linear => "linear",
            ScalingClass::Quadratic => "quadratic",
            ScalingClass::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for ScalingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub class: ScalingClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub target: BenchTarget,
    pub fit: LogLogFit,
}

/// Ordinary least squares of `ln t` on `ln L`.
pub fn fit_scaling_exponent(lengths: &[usize], times: &[f64]) -> Result<LogLogFit> {
    let bad = |m: String| Err(BenchError::Core(attnscale_core::Error::Contract(m)));
    if lengths.len() != times.len() {
        return bad(format!("{} lengths but {} times", lengths.len(), times.len()));
    }
    if lengths.len() < 4 {
        return bad(format!("scaling fit needs >= 4 points, got {}", lengths.len()));
    }
    if lengths.contains(&0) || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return bad("scaling fit needs positive lengths and times".into());
    }
    let x: Vec<f64> = lengths.iter().map(|&l| (l as f64).ln()).collect();
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return bad("scaling fit needs at least two distinct lengths".into());
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
        class: ScalingClass::from_slope(slope),
    })
}

/// Median of a non-empty slice; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One fit per series with at least four completed lengths, in series order.
pub fn fit_records(records: &[BenchRecord]) -> Vec<ScalingFit> {
    let mut series: BTreeMap<BenchTarget, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        series
            .entry(r.target())
            .or_default()
            .entry(r.seq_len)
            .or_default()
            .push(r.latency_ms);
    }
    series
        .into_iter()
        .filter_map(|(target, by_len)| {
            let lengths: Vec<usize> = by_len.keys().copied().collect();
            let medians: Vec<f64> = by_len.values().map(|v| median(v)).collect();
            fit_scaling_exponent(&lengths, &medians)
                .ok()
                .map(|fit| ScalingFit { target, fit })
        })
        .collect()
}
