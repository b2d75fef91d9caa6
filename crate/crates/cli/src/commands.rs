//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use wstack::bench::{run_plan, verify_pipeline, BenchPlan, Clock, DataSource, VerifyOptions};
use wstack::comms::{ReduceStrategy, Topology};
use wstack::metrics::{build_report, read_trace, write_trace_file, FreqLevel, Phase, ReportOptions, RunRecord};
use wstack::mesh::pixel_to_lm;
use wstack::pipeline::{run_pipeline, ImageOutput, PipelineRun, Source};
use wstack::transform::Provenance;
use wstack::visdata::{generate_synthetic, read_header, write_dataset};

use crate::config::Config;
use crate::{CliError, Command, Common};

fn load(common: &Common) -> Result<Config, CliError> {
    let mut c = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        c.set(k.trim(), v)?;
    }
    Ok(c)
}

fn set_opt(c: &mut Config, key: &str, v: &Option<String>) -> Result<(), CliError> {
    if let Some(v) = v {
        c.set(key, v)?;
    }
    Ok(())
}

fn set_path(c: &mut Config, key: &str, v: &Option<PathBuf>) -> Result<(), CliError> {
    if let Some(p) = v {
        c.set(key, &p.display().to_string())?;
    }
    Ok(())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Gen {
            sources,
            records,
            seed,
            output,
            common,
        } => {
            let mut c = load(&common)?;
            set_opt(&mut c, "gen.sources", &sources)?;
            set_opt(&mut c, "gen.records", &records)?;
            set_opt(&mut c, "run.seed", &seed)?;
            set_path(&mut c, "gen.output", &output)?;
            gen(&c)
        }
        Command::Image {
            dataset,
            topo,
            threads,
            out,
            common,
        } => {
            let mut c = load(&common)?;
            set_path(&mut c, "run.dataset", &dataset)?;
            if let Some(t) = &topo {
                c.set_topology(t)?;
            }
            set_opt(&mut c, "topo.threads_per_rank", &threads)?;
            set_path(&mut c, "run.out_dir", &out)?;
            image(&c)
        }
        Command::Bench {
            dataset,
            repeats,
            out,
            common,
        } => {
            let mut c = load(&common)?;
            set_path(&mut c, "run.dataset", &dataset)?;
            set_opt(&mut c, "bench.repeats", &repeats)?;
            set_path(&mut c, "run.out_dir", &out)?;
            bench(&c)
        }
        Command::Report {
            kind,
            inputs,
            alpha,
            reference,
            out,
            common,
        } => {
            let mut c = load(&common)?;
            set_opt(&mut c, "run.alpha", &alpha)?;
            set_opt(&mut c, "report.reference", &reference)?;
            report(&c, kind, &inputs, out)
        }
        Command::Verify {
            scale,
            dataset,
            force_fail,
            common,
        } => {
            load(&common)?;
            let rep = verify_pipeline(scale, &VerifyOptions { dataset, force_fail });
            out!("{}", rep.to_text().trim_end());
            Ok(if rep.passed() { 0 } else { 1 })
        }
        Command::Config { common } => {
            out!("{}", load(&common)?.dump().trim_end());
            Ok(0)
        }
    }
}

fn gen(c: &Config) -> Result<u8, CliError> {
    let sky = c.sky()?;
    let spec = c.synth()?;
    let (header, records) = generate_synthetic(&sky, &spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let path = c.path("gen.output");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    write_dataset(&records, &header, &path).map_err(CliError::from_vis)?;
    out!(
        "wrote {} records x {} channels to {} (seed {})",
        header.n_records,
        header.n_channels(),
        path.display(),
        header.seed
    );
    Ok(0)
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn image(c: &Config) -> Result<u8, CliError> {
    let dataset = c.path("run.dataset");
    if !dataset.is_file() {
        return Err(CliError::Usage(format!("dataset not found: {}", dataset.display())));
    }
    let cfg = c.imaging()?;
    let meter = c.meter()?;
    let freq = c.freq_level()?;
    let out_dir = c.path("run.out_dir");
    mkdir(&out_dir)?;
    let provenance = Provenance {
        kernel: cfg.kernel.kind.name().into(),
        half_support: cfg.kernel.half_support,
        shape_param: cfg.kernel.shape_param,
        topology: cfg.topo.to_string(),
        reduce: cfg.strategy.kind.to_string(),
        deterministic: cfg.strategy.deterministic,
        seed: Some(read_header(&dataset).map_err(CliError::from_vis)?.seed),
    };
    let output = ImageOutput {
        path: out_dir.join("image.f64"),
        pgm: c.get("run.pgm")?,
        provenance,
    };
    let start = match &meter {
        Some(m) => m.begin().map_err(CliError::from_metrics)?,
        None => None,
    };
    let run: PipelineRun = match c.raw("run.precision") {
        "f64" => run_pipeline::<f64>(Source::File(&dataset), &cfg, Some(&output)),
        "f32" => run_pipeline::<f32>(Source::File(&dataset), &cfg, Some(&output)),
        other => return Err(CliError::Usage(format!("run.precision = '{other}' (f64 | f32)"))),
    }
    .map_err(CliError::from_pipeline)?;
    let mut record = RunRecord::new("image", cfg.topo, freq);
    record.phase_times = run.seconds.clone();
    write_rows(
        &out_dir.join("timings.csv"),
        &["phase", "seconds", "ops"],
        Phase::ALL
            .iter()
            .map(|p| vec![p.to_string(), format!("{:.4}", run.seconds[p]), run.ops[p].to_string()])
            .collect(),
    )?;
    if let Some(m) = &meter {
        let joules = m
            .measure(start, "image", cfg.topo.n_nodes, freq, &run.seconds)
            .map_err(CliError::from_metrics)?;
        write_rows(
            &out_dir.join("energy.csv"),
            &["phase", "joules"],
            joules.iter().map(|(p, j)| vec![p.to_string(), j.to_string()]).collect(),
        )?;
        record.energy_joules = joules;
    }
    let messages = out_dir.join("messages.csv");
    run.log.write_csv_file(&messages).map_err(|e| io_err(&messages, e))?;
    let trace = out_dir.join("run.csv");
    write_trace_file(&[record], &trace).map_err(CliError::from_metrics)?;

    let (x, y) = run.image.argmax();
    let (l, m) = pixel_to_lm(&run.image.spec, x, y);
    out!("peak pixel ({x}, {y}) value {:.6} at l = {l:.6}, m = {m:.6}", run.image.get(x, y));
    out!("image sha256 {}", run.image.hash_hex());
    out!(
        "{} records, {} messages ({} inter-node), imaginary residual {:.3e}",
        run.n_records,
        run.log.len(),
        run.log.inter_node_count(),
        run.image.imag_residual_norm
    );
    for p in Phase::ALL {
        out!("  {:<9} {:>10.4} s", p.name(), run.seconds[&p]);
    }
    out!("outputs in {}", out_dir.display());
    Ok(0)
}

fn bench(c: &Config) -> Result<u8, CliError> {
    let meter = c
        .meter()?
        .ok_or_else(|| CliError::Usage("bench needs meter.kind other than none".into()))?;
    let source = if c.get::<bool>("bench.synthetic")? {
        DataSource::Synthetic {
            sky: c.sky()?,
            spec: c.synth()?,
        }
    } else {
        DataSource::Dataset(c.path("run.dataset"))
    };
    let deterministic: bool = c.get("reduce.deterministic")?;
    let clock = match c.raw("bench.clock") {
        "wall" => Clock::Wall,
        "ops" => Clock::Ops {
            seconds_per_op: c.get("bench.seconds_per_op")?,
        },
        other => return Err(CliError::Usage(format!("bench.clock = '{other}' (wall | ops)"))),
    };
    let plan = BenchPlan {
        label: c.raw("bench.label").to_string(),
        source,
        imaging: c.imaging()?,
        topologies: c.list::<Topology>("bench.topologies")?,
        strategies: c
            .reduce_kinds()?
            .into_iter()
            .map(|k| ReduceStrategy::new(k, deterministic))
            .collect(),
        freq_levels: c.list::<FreqLevel>("bench.freq_levels")?,
        repeats: c.get("bench.repeats")?,
        meter,
        clock,
        out_dir: Some(c.path("run.out_dir")),
    };
    let outcome = run_plan(&plan).map_err(CliError::from_bench)?;
    let mut by_cfg: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for a in outcome.aggregates.iter().filter(|a| a.metric == "seconds_total") {
        let key = format!(
            "{} {} {} {}",
            a.config.topology, a.config.strategy.kind, a.config.freq_level, a.config.strategy.deterministic
        );
        by_cfg.insert(key, (a.mean, a.stddev, a.n));
    }
    out!("{:<40} {:>12} {:>12} {:>3}", "topology reduce freq deterministic", "mean_s", "stddev_s", "n");
    for (k, (m, s, n)) in &by_cfg {
        out!("{k:<40} {m:>12.4} {s:>12.4} {n:>3}");
    }
    for r in outcome.runs.iter().filter(|r| r.outcome.is_err()) {
        out!(
            "failed: {} {} repeat {}: {}",
            r.config.topology,
            r.config.strategy.kind,
            r.repeat,
            r.outcome.as_ref().err().map(String::as_str).unwrap_or("")
        );
    }
    out!("distinct image hashes: {}", outcome.distinct_hashes().len());
    out!("outputs in {}", c.path("run.out_dir").display());
    Ok(if outcome.all_ok() { 0 } else { 1 })
}

fn report(c: &Config, kind: wstack::metrics::ReportKind, inputs: &[PathBuf], out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut runs = Vec::new();
    for p in inputs {
        if !p.is_file() {
            return Err(CliError::Io(format!("{}: no such file", p.display())));
        }
        match read_trace(p) {
            Ok(r) => runs.extend(r),
            Err(wstack::metrics::MetricsError::NoRuns) => {}
            Err(e) => return Err(CliError::Usage(format!("{}: {e}", p.display()))),
        }
    }
    if runs.is_empty() {
        return Err(CliError::Usage("no runs found".into()));
    }
    let reference = match c.raw("report.reference") {
        "" => None,
        r => Some(r.to_string()),
    };
    let opts = ReportOptions {
        alpha: c.get("run.alpha")?,
        reference,
        cpu_label: c.raw("report.cpu_label").to_string(),
        gpu_label: c.raw("report.gpu_label").to_string(),
    };
    let rep = build_report(kind, &runs, &opts).map_err(CliError::from_metrics)?;
    let path = match out {
        Some(p) => p,
        None => {
            let dir = c.path("run.out_dir");
            mkdir(&dir)?;
            dir.join(format!("report_{}.csv", kind.name()))
        }
    };
    rep.write_csv_file(&path).map_err(CliError::from_metrics)?;
    out!("{}", rep.to_text().trim_end());
    out!("wrote {}", path.display());
    Ok(0)
}
