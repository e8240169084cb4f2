use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use attnscale_core::MechanismKind;

use crate::error::{BenchError, Result};
use crate::fit::ScalingFit;
use crate::measure::{BenchFailure, BenchRecord};
use crate::summary::series_medians;

pub const CSV_HEADER: [&str; 8] = [
    "mechanism",
    "mode",
    "seq_len",
    "model_dim",
    "heads",
    "repeat",
    "latency_ms",
    "peak_bytes",
];
pub const FITS_HEADER: [&str; 5] = ["mechanism", "mode", "slope", "r2", "class"];
pub const FAILURES_HEADER: [&str; 4] = ["mechanism", "mode", "seq_len", "reason"];

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap()
}

/// `%g`-style formatting: `digits` significant digits, trailing zeros
/// dropped, scientific notation outside `[1e-4, 10^digits)`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `dir/stem.csv` → `dir/stem{suffix}`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::io(path, e)
}

/// Writes the records to `path` (sorted by mechanism, mode, length, repeat)
/// and the fits to `<stem>_fits.csv`. Returns the fits path.
pub fn emit_csv(records: &[BenchRecord], fits: &[ScalingFit], path: &Path) -> Result<PathBuf> {
    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut w = writer(path)?;
    w.write_record(CSV_HEADER).map_err(csv_err(path))?;
    for r in sorted {
        w.write_record([
            r.mechanism.id().to_string(),
            r.mode.id().to_string(),
            r.seq_len.to_string(),
            r.model_dim.to_string(),
            r.heads.to_string(),
            r.repeat.to_string(),
            format_sig(r.latency_ms, 6),
            r.peak_bytes.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;

    let fits_path = sibling_path(path, "_fits.csv");
    let mut w = writer(&fits_path)?;
    w.write_record(FITS_HEADER).map_err(csv_err(&fits_path))?;
    for f in fits {
        w.write_record([
            f.target.kind.id().to_string(),
            f.target.mode.id().to_string(),
            format_sig(f.fit.slope, 6),
            format_sig(f.fit.r2, 6),
            f.fit.class.id().to_string(),
        ])
        .map_err(csv_err(&fits_path))?;
    }
    w.flush().map_err(|e| BenchError::io(&fits_path, e))?;
    Ok(fits_path)
}

/// Writes skipped or failed lengths to `<stem>_failures.csv`.
pub fn emit_failures(failures: &[BenchFailure], path: &Path) -> Result<PathBuf> {
    let out = sibling_path(path, "_failures.csv");
    let mut w = writer(&out)?;
    w.write_record(FAILURES_HEADER).map_err(csv_err(&out))?;
    for f in failures {
        w.write_record([f.mechanism.id(), f.mode.id(), &f.seq_len.to_string(), &f.reason])
            .map_err(csv_err(&out))?;
    }
    w.flush().map_err(|e| BenchError::io(&out, e))?;
    Ok(out)
}

/// Reads a file written by [`emit_csv`]. Errors name the offending line.
pub fn parse_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let parse_err = |line: u64, message: String| BenchError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = reader.records();
    match rows.next() {
        None => return Err(parse_err(1, "missing header".into())),
        Some(header) => {
            let header = header.map_err(|e| parse_err(1, e.to_string()))?;
            if header.iter().ne(CSV_HEADER) {
                return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(","))));
            }
        }
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != CSV_HEADER.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", CSV_HEADER.len(), row.len())));
        }
        let field = |i: usize| &row[i];
        fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.trim().parse().map_err(|_| format!("invalid {name} `{s}`"))
        }
        let parsed = (|| -> std::result::Result<BenchRecord, String> {
            let mechanism: MechanismKind = field(0).parse().map_err(|e: attnscale_core::Error| e.to_string())?;
            let mode = field(1).parse().map_err(|e: attnscale_core::Error| e.to_string())?;
            let latency_ms: f64 = num(field(6), "latency_ms")?;
            if !(latency_ms > 0.0 && latency_ms.is_finite()) {
                return Err(format!("latency_ms must be positive, got `{}`", field(6)));
            }
            Ok(BenchRecord {
                mechanism,
                mode,
                seq_len: num(field(2), "seq_len")?,
                model_dim: num(field(3), "model_dim")?,
                heads: num(field(4), "heads")?,
                repeat: num(field(5), "repeat")?,
                latency_ms,
                peak_bytes: num(field(7), "peak_bytes")?,
            })
        })();
        out.push(parsed.map_err(|m| parse_err(line, m))?);
    }
    Ok(out)
}

/// Paths of the four panel files written by [`emit_plot_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub latency_all: PathBuf,
    pub memory_all: PathBuf,
    pub latency_no_sa: PathBuf,
    pub memory_no_sa: PathBuf,
}

impl PlotFiles {
    pub fn for_path(path: &Path) -> Self {
        PlotFiles {
            latency_all: sibling_path(path, "_a_latency.dat"),
            memory_all: sibling_path(path, "_b_memory.dat"),
            latency_no_sa: sibling_path(path, "_c_latency_no_sa.dat"),
            memory_no_sa: sibling_path(path, "_d_memory_no_sa.dat"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.latency_all, &self.memory_all, &self.latency_no_sa, &self.memory_no_sa]
    }
}

/// Writes median latency and memory per (series, length) as four
/// whitespace-separated panel files next to `path`: all mechanisms and the
/// same without SA. Series are separated by two blank lines.
pub fn emit_plot_data(records: &[BenchRecord], path: &Path) -> Result<PlotFiles> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to plot".into()));
    }
    let files = PlotFiles::for_path(path);
    let points = series_medians(records);
    let panels = [
        (&files.latency_all, "a", "median latency (ms)", false, false),
        (&files.memory_all, "b", "median peak bytes", true, false),
        (&files.latency_no_sa, "c", "median latency (ms), SA excluded", false, true),
        (&files.memory_no_sa, "d", "median peak bytes, SA excluded", true, true),
    ];
    for (file, name, title, memory, exclude_sa) in panels {
        let mut w = BufWriter::new(File::create(file).map_err(|e| BenchError::io(file, e))?);
        let io = |e| BenchError::io(file, e);
        writeln!(w, "# panel {name}: {title} vs sequence length").map_err(io)?;
        writeln!(w, "# columns: seq_len {}", if memory { "peak_bytes" } else { "latency_ms" }).map_err(io)?;
        let selected: Vec<_> = points
            .iter()
            .filter(|p| !(exclude_sa && p.target.kind == MechanismKind::Sa))
            .collect();
        if selected.is_empty() {
            writeln!(w, "# no series: only SA was measured").map_err(io)?;
        }
        let mut current = None;
        for p in selected {
            if current != Some(p.target) {
                if current.is_some() {
                    writeln!(w, "\n").map_err(io)?;
                }
                writeln!(w, "# series: {} {}", p.target.kind.id(), p.target.mode.id()).map_err(io)?;
                current = Some(p.target);
            }
            let value = if memory { p.peak_bytes } else { p.latency_ms };
            writeln!(w, "{} {}", p.seq_len, format_sig(value, 6)).map_err(io)?;
        }
        w.flush().map_err(|e| BenchError::io(file, e))?;
    }
    Ok(files)
}
