//! Latency and peak-memory scaling harness for the `attnscale-core`
//! sequence operators.
//!
//! A sweep runs each (mechanism, mode) pair over an ascending list of
//! sequence lengths at batch size one, records every timed repeat, fits a
//! log-log scaling exponent to the median latencies, and writes CSV and
//! plot-ready series files.

mod config;
mod error;
mod fit;
mod io;
mod measure;
mod summary;

pub use config::{BenchConfig, BenchTarget};
pub use error::{BenchError, Result};
pub use fit::{fit_records, fit_scaling_exponent, median, LogLogFit, ScalingClass, ScalingFit};
pub use io::{
    emit_csv, emit_failures, emit_plot_data, format_sig, parse_csv, round_sig, sibling_path, PlotFiles,
    CSV_HEADER, FAILURES_HEADER, FITS_HEADER,
};
pub use measure::{
    measure_latency, measure_peak_memory, run_sweep, run_sweep_with, BenchFailure, BenchRecord, SweepEvent,
    SweepResult,
};
pub use summary::{series_medians, summarize, RatioAtLength, SeriesPoint, Summary};
