use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use attnscale_bench::{
    emit_csv, emit_failures, emit_plot_data, format_sig, parse_csv, run_sweep_with, summarize, BenchConfig,
    SweepEvent,
};
use attnscale_core::config::KvConfig;
use attnscale_core::pipeline::{model_forward, ModelParams, PipelineConfig};
use attnscale_core::MechanismKind;

use crate::args::{BenchArgs, DemoArgs, ModelFlags, ReportArgs};
use crate::error::{runtime, usage, CliResult};

fn load_kv(path: Option<&Path>) -> CliResult<Option<KvConfig>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(runtime)?;
    KvConfig::parse(&text)
        .map(Some)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn gate_rank(rank: usize) -> Option<usize> {
    (rank > 0).then_some(rank)
}

/// Applies config-file values, then explicit flags, to a bench config.
pub fn bench_config(args: &BenchArgs) -> CliResult<(BenchConfig, PathBuf)> {
    let mut cfg = BenchConfig::default();
    let mut out = PathBuf::from("results.csv");
    let kv_err = |e: attnscale_core::Error| usage(e);
    if let Some(kv) = load_kv(args.model.config.as_deref())? {
        if let Some(v) = kv.get_list("mechanisms").map_err(kv_err)? {
            cfg.mechanisms = v;
        }
        if let Some(v) = kv.get("mode").map_err(kv_err)? {
            cfg.mode = Some(v);
        }
        if let Some(v) = kv.get_list("lengths").map_err(kv_err)? {
            cfg.lengths = v;
        }
        if let Some(v) = kv.get("dim").map_err(kv_err)? {
            cfg.model_dim = v;
        }
        if let Some(v) = kv.get("heads").map_err(kv_err)? {
            cfg.num_heads = v;
        }
        if let Some(v) = kv.get("slots").map_err(kv_err)? {
            cfg.slots = v;
        }
        if let Some(v) = kv.get("gate_rank").map_err(kv_err)? {
            cfg.gate_rank = gate_rank(v);
        }
        if let Some(v) = kv.get("seed").map_err(kv_err)? {
            cfg.seed = v;
        }
        if let Some(v) = kv.get("repeats").map_err(kv_err)? {
            cfg.repeats = v;
        }
        if let Some(v) = kv.get("warmup").map_err(kv_err)? {
            cfg.warmup = v;
        }
        if let Some(v) = kv.get("max_length_cap").map_err(kv_err)? {
            cfg.max_length_cap = Some(v);
        }
        if let Some(v) = kv.get::<String>("out").map_err(kv_err)? {
            out = v.into();
        }
    }
    if let Some(v) = &args.mechanisms {
        cfg.mechanisms = v.clone();
    }
    if args.mode.is_some() {
        cfg.mode = args.mode;
    }
    if let Some(v) = &args.lengths {
        cfg.lengths = v.clone();
    }
    apply_model_flags(&args.model, &mut cfg);
    if let Some(v) = args.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = args.warmup {
        cfg.warmup = v;
    }
    if args.max_length_cap.is_some() {
        cfg.max_length_cap = args.max_length_cap;
    }
    if let Some(v) = &args.out {
        out = v.clone();
    }

    if cfg.lengths.contains(&0) {
        return Err(usage("--lengths: every length must be >= 1"));
    }
    if cfg.lengths.windows(2).any(|w| w[0] >= w[1]) {
        let list: Vec<String> = cfg.lengths.iter().map(ToString::to_string).collect();
        return Err(usage(format!("--lengths must be strictly ascending (got {})", list.join(","))));
    }
    if cfg.repeats < 3 {
        return Err(usage(format!("--repeats must be >= 3 (got {})", cfg.repeats)));
    }
    cfg.validate().map_err(usage)?;
    Ok((cfg, out))
}

fn apply_model_flags(flags: &ModelFlags, cfg: &mut BenchConfig) {
    if let Some(v) = flags.dim {
        cfg.model_dim = v;
    }
    if let Some(v) = flags.heads {
        cfg.num_heads = v;
    }
    if let Some(v) = flags.slots {
        cfg.slots = v;
    }
    if let Some(v) = flags.gate_rank {
        cfg.gate_rank = gate_rank(v);
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
}

pub fn bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let (cfg, path) = bench_config(args)?;
    let result = run_sweep_with(&cfg, |event| match event {
        SweepEvent::Started { target, seq_len } => {
            eprint!("{:<20} L={seq_len:<6} ", target.label());
        }
        SweepEvent::Measured { median_ms, peak_bytes, .. } => {
            eprintln!("median {median_ms:.1} ms, peak {peak_bytes} B");
        }
        SweepEvent::Failed(f) => {
            eprintln!("{}/{} L={}: {}", f.mechanism.id(), f.mode.id(), f.seq_len, f.reason);
        }
    })
    .map_err(runtime)?;

    let fits = result.fits();
    let fits_path = emit_csv(&result.records, &fits, &path).map_err(runtime)?;
    let failures_path = emit_failures(&result.failures, &path).map_err(runtime)?;
    let w = |e: std::io::Error| runtime(e);
    writeln!(out, "wrote {}", path.display()).map_err(w)?;
    writeln!(out, "wrote {}", fits_path.display()).map_err(w)?;
    writeln!(out, "wrote {}", failures_path.display()).map_err(w)?;
    if result.records.is_empty() {
        writeln!(out, "no lengths were measured; panel files not written").map_err(w)?;
    } else {
        let panels = emit_plot_data(&result.records, &path).map_err(runtime)?;
        for p in panels.all() {
            writeln!(out, "wrote {}", p.display()).map_err(w)?;
        }
    }
    writeln!(out).map_err(w)?;
    print_fits(&fits, out).map_err(w)?;
    Ok(())
}

fn print_fits(fits: &[attnscale_bench::ScalingFit], out: &mut dyn Write) -> std::io::Result<()> {
    if fits.is_empty() {
        return writeln!(out, "no series has the 4 lengths needed for a scaling fit");
    }
    writeln!(out, "{:<20} {:>8} {:>8}  class", "series", "slope", "r2")?;
    for f in fits {
        writeln!(
            out,
            "{:<20} {:>8.4} {:>8.4}  {}",
            f.target.label(),
            f.fit.slope,
            f.fit.r2,
            f.fit.class
        )?;
    }
    Ok(())
}

/// Applies config-file values, then explicit flags, to a demo config.
pub fn demo_config(args: &DemoArgs) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::new(MechanismKind::Sa, 256, 0);
    if let Some(kv) = load_kv(args.model.config.as_deref())? {
        cfg.apply_kv(&kv).map_err(usage)?;
    }
    if let Some(kind) = args.mechanism {
        cfg.mechanism = kind;
        cfg.mode = kind.default_mode();
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(v) = args.speech_len {
        cfg.speech_len = v;
    }
    if let Some(v) = args.text_len {
        cfg.text_len = v;
    }
    let m = &args.model;
    let mc = &mut cfg.mechanism_config;
    if let Some(v) = m.dim {
        mc.model_dim = v;
    }
    if let Some(v) = m.heads {
        mc.num_heads = v;
    }
    if let Some(v) = m.slots {
        mc.slots = v;
    }
    if let Some(v) = m.gate_rank {
        mc.gate_rank = gate_rank(v);
    }
    if let Some(v) = m.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn demo(args: &DemoArgs, out: &mut dyn Write) -> CliResult {
    let cfg = demo_config(args)?;
    let params = ModelParams::init(&cfg).map_err(runtime)?;
    let (speech, text) = cfg.synth_inputs().map_err(runtime)?;
    let pred = model_forward(&speech, &text, &params, cfg.mode).map_err(runtime)?;
    let w = |e: std::io::Error| runtime(e);
    writeln!(
        out,
        "mechanism {} ({})  seed {}  S={} E={} D={} H={}",
        cfg.mechanism,
        cfg.mode,
        cfg.seed,
        cfg.speech_len,
        cfg.text_len,
        cfg.model_dim(),
        cfg.mechanism_config.num_heads
    )
    .map_err(w)?;
    for (i, l) in pred.logits.iter().enumerate() {
        writeln!(out, "logit {} {l}", i + 1).map_err(w)?;
    }
    writeln!(out, "class {}", pred.class).map_err(w)?;
    Ok(())
}

const FOX_NOTE: &str = "note: FoX runs here as a naive quadratic kernel, so it scales like SA in both \
latency and memory. Results that show FoX with a small memory footprint depend on fused attention \
kernels, which this implementation does not use.";

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> CliResult {
    let records = parse_csv(&args.input).map_err(runtime)?;
    let w = |e: std::io::Error| runtime(e);
    if records.is_empty() {
        writeln!(out, "no records in {}", args.input.display()).map_err(w)?;
        return Ok(());
    }
    let summary = summarize(&records);
    writeln!(out, "{} records, {} series", records.len(), {
        let mut t: Vec<_> = records.iter().map(|r| r.target()).collect();
        t.dedup();
        t.len()
    })
    .map_err(w)?;
    writeln!(out).map_err(w)?;
    print_fits(&summary.fits, out).map_err(w)?;
    writeln!(out).map_err(w)?;
    if summary.ratios.is_empty() {
        writeln!(out, "no SA series with a length shared by another series; ratios skipped").map_err(w)?;
    } else {
        writeln!(out, "SA relative to each series at the largest common length:").map_err(w)?;
        writeln!(out, "{:<20} {:>7} {:>12} {:>12}", "series", "L", "latency", "memory").map_err(w)?;
        for r in &summary.ratios {
            writeln!(
                out,
                "{:<20} {:>7} {:>11}x {:>11}x",
                r.other.label(),
                r.seq_len,
                format_sig(r.latency_ratio, 4),
                format_sig(r.memory_ratio, 4)
            )
            .map_err(w)?;
        }
    }
    writeln!(out).map_err(w)?;
    writeln!(out, "{FOX_NOTE}").map_err(w)?;
    Ok(())
}

