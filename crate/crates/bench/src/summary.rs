use std::collections::BTreeMap;

use attnscale_core::MechanismKind;

use crate::config::BenchTarget;
use crate::fit::{fit_records, median, ScalingFit};
use crate::measure::BenchRecord;

/// Median latency and peak bytes of one (series, length) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub target: BenchTarget,
    pub seq_len: usize,
    pub latency_ms: f64,
    pub peak_bytes: f64,
    pub repeats: usize,
}

pub fn series_medians(records: &[BenchRecord]) -> Vec<SeriesPoint> {
    let mut cells: BTreeMap<(BenchTarget, usize), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.target(), r.seq_len)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((target, seq_len), rs)| {
            let lat: Vec<f64> = rs.iter().map(|r| r.latency_ms).collect();
            let mem: Vec<f64> = rs.iter().map(|r| r.peak_bytes as f64).collect();
            SeriesPoint {
                target,
                seq_len,
                latency_ms: median(&lat),
                peak_bytes: median(&mem),
                repeats: rs.len(),
            }
        })
        .collect()
}

/// SA relative to another series at the largest length both completed.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioAtLength {
    pub other: BenchTarget,
    pub seq_len: usize,
    pub latency_ratio: f64,
    pub memory_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub fits: Vec<ScalingFit>,
    pub ratios: Vec<RatioAtLength>,
    pub points: Vec<SeriesPoint>,
}

pub fn summarize(records: &[BenchRecord]) -> Summary {
    let points = series_medians(records);
    let sa: BTreeMap<usize, &SeriesPoint> = points
        .iter()
        .filter(|p| p.target.kind == MechanismKind::Sa)
        .map(|p| (p.seq_len, p))
        .collect();
    let mut by_target: BTreeMap<BenchTarget, Vec<&SeriesPoint>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.target.kind != MechanismKind::Sa) {
        by_target.entry(p.target).or_default().push(p);
    }
    let ratios = by_target
        .into_iter()
        .filter_map(|(other, ps)| {
            let p = ps.iter().rev().find(|p| sa.contains_key(&p.seq_len))?;
            let s = sa[&p.seq_len];
            Some(RatioAtLength {
                other,
                seq_len: p.seq_len,
                latency_ratio: s.latency_ms / p.latency_ms,
                memory_ratio: s.peak_bytes / p.peak_bytes,
            })
        })
        .collect();
    Summary {
        fits: fit_records(records),
        ratios,
        points,
    }
}
