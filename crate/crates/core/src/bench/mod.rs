//! Repeated pipeline runs over topology, strategy and frequency sweeps, with
//! raw and aggregated CSV output, plus the self-check suite.
//!
//! Raw CSV (`runs.csv`) header:
//! `label,topology,reduce,deterministic,freq_level,repeat,status,reason,started_unix,image_hash,`
//! then `seconds_<phase>` and `joules_<phase>` for read, gridding, reduce,
//! fft, wcorrect, write, total. Failed runs leave the value columns blank.
//!
//! Aggregate CSV (`aggregate.csv`) header:
//! `label,topology,reduce,deterministic,freq_level,metric,n,mean,stddev`, one
//! row per configuration and metric over its successful repeats; `stddev` is
//! the sample standard deviation (0 for a single repeat).
//!
//! `trace.csv` holds the per-configuration means in trace format, labelled
//! `<label>_<reduce>_<topology>`, so the report engine can read it.

mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::comms::{ReduceStrategy, Topology};
use crate::metrics::{write_trace_file, EnergyMeter, FreqLevel, MetricsError, Phase, RunRecord};
use crate::pipeline::{run_pipeline, ImagingConfig, Source};
use crate::visdata::{generate_synthetic, DatasetHeader, SkyModel, SynthSpec, VisError, VisRecord};

pub use verify::{verify_pipeline, CheckResult, Scale, VerifyOptions, VerifyReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("dataset not found: {0}")]
    DatasetNotFound(String),
    #[error(transparent)]
    Vis(#[from] VisError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dataset(PathBuf),
    Synthetic { sky: SkyModel, spec: SynthSpec },
}

/// How phase durations are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    /// Measured wall time.
    Wall,
    /// Deterministic work counts times a fixed cost; total is the phase sum.
    Ops { seconds_per_op: f64 },
}

/// Frequency levels only select the meter's power figure: the host clock is
/// never changed.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub label: String,
    pub source: DataSource,
    /// Mesh, kernel and chunking; topology and strategy come from the sweeps.
    pub imaging: ImagingConfig,
    pub topologies: Vec<Topology>,
    pub strategies: Vec<ReduceStrategy>,
    pub freq_levels: Vec<FreqLevel>,
    pub repeats: usize,
    pub meter: EnergyMeter,
    pub clock: Clock,
    pub out_dir: Option<PathBuf>,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Plan(m.into()));
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.topologies.is_empty() || self.strategies.is_empty() || self.freq_levels.is_empty() {
            return bad("sweep lists must be non-empty");
        }
        if let Clock::Ops { seconds_per_op } = self.clock {
            if !(seconds_per_op > 0.0 && seconds_per_op.is_finite()) {
                return bad("seconds_per_op must be positive");
            }
        }
        Ok(())
    }
}

/// One swept configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub topology: Topology,
    pub strategy: ReduceStrategy,
    pub freq_level: FreqLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub config: CellConfig,
    pub repeat: usize,
    pub started_unix: u64,
    /// `Err(reason)` for a failed cell.
    pub outcome: std::result::Result<(RunRecord, String), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub config: CellConfig,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub label: String,
    pub runs: Vec<RawRun>,
    pub aggregates: Vec<AggregateRow>,
}

impl BenchOutcome {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.outcome.is_ok())
    }

    /// Distinct image hashes over all successful runs.
    pub fn distinct_hashes(&self) -> Vec<&str> {
        let mut h: Vec<&str> = self
            .runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|(_, h)| h.as_str()))
            .collect();
        h.sort_unstable();
        h.dedup();
        h
    }
}

/// Mean and sample standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn metric_names() -> Vec<(String, Phase, bool)> {
    let mut m = Vec::new();
    for p in Phase::ALL {
        m.push((format!("seconds_{p}"), p, false));
    }
    for p in Phase::ALL {
        m.push((format!("joules_{p}"), p, true));
    }
    m
}

fn config_label(label: &str, c: &CellConfig) -> String {
    format!("{label}_{}_{}", c.strategy.kind, c.topology)
}

/// Executes every configuration `repeats` times, one at a time.
pub fn run_plan(plan: &BenchPlan) -> Result<BenchOutcome> {
    plan.validate()?;
    let memory: Option<(DatasetHeader, Vec<VisRecord>)> = match &plan.source {
        DataSource::Dataset(p) => {
            if !p.is_file() {
                return Err(BenchError::DatasetNotFound(p.display().to_string()));
            }
            None
        }
        DataSource::Synthetic { sky, spec } => Some(generate_synthetic(sky, spec)?),
    };

    let mut runs = Vec::new();
    for topo in &plan.topologies {
        for strategy in &plan.strategies {
            for freq in &plan.freq_levels {
                let config = CellConfig {
                    topology: *topo,
                    strategy: *strategy,
                    freq_level: *freq,
                };
                for repeat in 0..plan.repeats {
                    let started_unix = SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0);
                    let outcome = run_cell(plan, &config, memory.as_ref());
                    runs.push(RawRun {
                        config: config.clone(),
                        repeat,
                        started_unix,
                        outcome,
                    });
                }
            }
        }
    }

    let mut aggregates = Vec::new();
    let mut configs: Vec<CellConfig> = Vec::new();
    for r in &runs {
        if !configs.contains(&r.config) {
            configs.push(r.config.clone());
        }
    }
    for c in &configs {
        let ok: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| &r.config == c)
            .filter_map(|r| r.outcome.as_ref().ok().map(|(rec, _)| rec))
            .collect();
        if ok.is_empty() {
            continue;
        }
        for (name, phase, energy) in metric_names() {
            let xs: Vec<f64> = ok
                .iter()
                .filter_map(|r| if energy { r.energy_joules.get(&phase) } else { r.phase_times.get(&phase) }.copied())
                .collect();
            if xs.len() != ok.len() {
                continue;
            }
            let (mean, stddev) = mean_stddev(&xs);
            aggregates.push(AggregateRow {
                config: c.clone(),
                metric: name,
                n: xs.len(),
                mean,
                stddev,
            });
        }
    }
    let outcome = BenchOutcome {
        label: plan.label.clone(),
        runs,
        aggregates,
    };
    if let Some(dir) = &plan.out_dir {
        write_outputs(&outcome, dir)?;
    }
    Ok(outcome)
}

fn run_cell(
    plan: &BenchPlan,
    config: &CellConfig,
    memory: Option<&(DatasetHeader, Vec<VisRecord>)>,
) -> std::result::Result<(RunRecord, String), String> {
    let mut cfg = plan.imaging.clone();
    cfg.topo = config.topology;
    cfg.strategy = config.strategy;
    let source = match (&plan.source, memory) {
        (_, Some((h, r))) => Source::Memory(h, r),
        (DataSource::Dataset(p), None) => Source::File(p),
        _ => unreachable!("synthetic data is generated up front"),
    };
    let label = config_label(&plan.label, config);
    let start = plan.meter.begin().map_err(|e| e.to_string())?;
    let run = run_pipeline::<f64>(source, &cfg, None).map_err(|e| e.to_string())?;
    let seconds: BTreeMap<Phase, f64> = match plan.clock {
        Clock::Wall => run.seconds.clone(),
        Clock::Ops { seconds_per_op } => run.ops.iter().map(|(p, n)| (*p, *n as f64 * seconds_per_op)).collect(),
    };
    let joules = plan
        .meter
        .measure(start, &label, config.topology.n_nodes, config.freq_level, &seconds)
        .map_err(|e| e.to_string())?;
    let mut rec = RunRecord::new(label, config.topology, config.freq_level);
    rec.phase_times = seconds;
    rec.energy_joules = joules;
    Ok((rec, run.image.hash_hex()))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Raw CSV as bytes.
pub fn raw_csv(outcome: &BenchOutcome) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "label",
        "topology",
        "reduce",
        "deterministic",
        "freq_level",
        "repeat",
        "status",
        "reason",
        "started_unix",
        "image_hash",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(metric_names().into_iter().map(|m| m.0));
    w.write_record(&header).expect("in-memory write");
    for r in &outcome.runs {
        let c = &r.config;
        let mut row = vec![
            outcome.label.clone(),
            c.topology.to_string(),
            c.strategy.kind.to_string(),
            c.strategy.deterministic.to_string(),
            c.freq_level.to_string(),
            r.repeat.to_string(),
        ];
        match &r.outcome {
            Ok((rec, hash)) => {
                row.extend(["ok".into(), String::new(), r.started_unix.to_string(), hash.clone()]);
                for (_, phase, energy) in metric_names() {
                    let map = if energy { &rec.energy_joules } else { &rec.phase_times };
                    row.push(map.get(&phase).map(|v| v.to_string()).unwrap_or_default());
                }
            }
            Err(reason) => {
                row.extend(["failed".into(), reason.clone(), r.started_unix.to_string(), String::new()]);
                row.extend(std::iter::repeat_n(String::new(), 2 * Phase::ALL.len()));
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Aggregate CSV as bytes.
pub fn aggregate_csv(outcome: &BenchOutcome) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "topology",
        "reduce",
        "deterministic",
        "freq_level",
        "metric",
        "n",
        "mean",
        "stddev",
    ])
    .expect("in-memory write");
    for a in &outcome.aggregates {
        let c = &a.config;
        w.write_record([
            outcome.label.clone(),
            c.topology.to_string(),
            c.strategy.kind.to_string(),
            c.strategy.deterministic.to_string(),
            c.freq_level.to_string(),
            a.metric.clone(),
            a.n.to_string(),
            a.mean.to_string(),
            a.stddev.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Per-configuration means as runs, for trace export.
pub fn mean_runs(outcome: &BenchOutcome) -> Vec<RunRecord> {
    let mut out: Vec<RunRecord> = Vec::new();
    for a in &outcome.aggregates {
        let label = config_label(&outcome.label, &a.config);
        let idx = match out
            .iter()
            .position(|r| r.label == label && r.freq_level == a.config.freq_level)
        {
            Some(i) => i,
            None => {
                out.push(RunRecord::new(label, a.config.topology, a.config.freq_level));
                out.len() - 1
            }
        };
        let (kind, phase) = a.metric.split_once('_').expect("metric names are kind_phase");
        let phase: Phase = phase.parse().expect("known phase");
        let map = if kind == "joules" {
            &mut out[idx].energy_joules
        } else {
            &mut out[idx].phase_times
        };
        map.insert(phase, a.mean);
    }
    out
}

/// Writes `runs.csv`, `aggregate.csv` and `trace.csv` into `dir`.
pub fn write_outputs(outcome: &BenchOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let raw = dir.join("runs.csv");
    fs::write(&raw, raw_csv(outcome)).map_err(io(&raw))?;
    let agg = dir.join("aggregate.csv");
    fs::write(&agg, aggregate_csv(outcome)).map_err(io(&agg))?;
    let trace = dir.join("trace.csv");
    let means = mean_runs(outcome);
    if !means.is_empty() {
        write_trace_file(&means, &trace)?;
    }
    Ok(())
}
