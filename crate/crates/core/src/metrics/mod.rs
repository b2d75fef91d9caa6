//! Phase timings, energy meters, green productivity and the report
//! calculations built on them.

mod meter;
mod report;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::comms::Topology;

pub use meter::{CounterSource, EnergyMeter, LevelWatts};
pub use report::{
    build_report, ratio_report, scaling_gp_report, Cell, RatioRow, Report, ReportKind, ReportOptions,
};
pub use trace::{parse_trace, read_trace, write_trace, write_trace_file, TRACE_HEADER};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0} must be positive")]
    NonPositive(String),
    #[error("run '{label}' has no '{phase}' value")]
    MissingPhase { label: String, phase: Phase },
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
    #[error("runs must be ordered by strictly increasing node count: {0}")]
    Unordered(String),
    #[error("schema errors:\n{}", .0.join("\n"))]
    Schema(Vec<String>),
    #[error("no runs found")]
    NoRuns,
    #[error("no trace entry for {0}")]
    MissingTrace(String),
    #[error("energy counter unavailable: {0}")]
    Counter(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Timed portions of a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Read,
    Gridding,
    Reduce,
    Fft,
    Wcorrect,
    Write,
    Total,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Read,
        Phase::Gridding,
        Phase::Reduce,
        Phase::Fft,
        Phase::Wcorrect,
        Phase::Write,
        Phase::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Read => "read",
            Phase::Gridding => "gridding",
            Phase::Reduce => "reduce",
            Phase::Fft => "fft",
            Phase::Wcorrect => "wcorrect",
            Phase::Write => "write",
            Phase::Total => "total",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown phase '{s}'"))
    }
}

/// CPU frequency setting of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum FreqLevel {
    /// OS-governed.
    #[default]
    Default,
    High,
    Medium,
    Low,
}

impl FreqLevel {
    pub const ALL: [FreqLevel; 4] = [FreqLevel::Default, FreqLevel::High, FreqLevel::Medium, FreqLevel::Low];

    pub fn name(self) -> &'static str {
        match self {
            FreqLevel::Default => "default",
            FreqLevel::High => "high",
            FreqLevel::Medium => "medium",
            FreqLevel::Low => "low",
        }
    }

    /// Fixed clock in GHz; `None` when the OS picks it.
    pub fn ghz(self) -> Option<f64> {
        match self {
            FreqLevel::Default => None,
            FreqLevel::High => Some(2.60),
            FreqLevel::Medium => Some(2.00),
            FreqLevel::Low => Some(1.50),
        }
    }
}

impl fmt::Display for FreqLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreqLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FreqLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown frequency level '{s}' (default, high, medium, low)"))
    }
}

/// Seconds and joules per phase for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub topology: Topology,
    pub freq_level: FreqLevel,
    pub phase_times: BTreeMap<Phase, f64>,
    pub energy_joules: BTreeMap<Phase, f64>,
}

impl RunRecord {
    pub fn new(label: impl Into<String>, topology: Topology, freq_level: FreqLevel) -> Self {
        Self {
            label: label.into(),
            topology,
            freq_level,
            phase_times: BTreeMap::new(),
            energy_joules: BTreeMap::new(),
        }
    }

    /// Shorthand for a run known only by its totals.
    pub fn from_totals(label: impl Into<String>, n_nodes: usize, seconds: f64, joules: f64) -> Self {
        let mut r = Self::new(label, Topology::new(n_nodes.max(1), 1, 1).expect("n_nodes >= 1"), FreqLevel::Default);
        r.phase_times.insert(Phase::Total, seconds);
        r.energy_joules.insert(Phase::Total, joules);
        r
    }

    pub fn n_nodes(&self) -> usize {
        self.topology.n_nodes
    }

    pub fn time(&self, phase: Phase) -> Result<f64> {
        self.phase_times.get(&phase).copied().ok_or_else(|| MetricsError::MissingPhase {
            label: self.label.clone(),
            phase,
        })
    }

    pub fn total_time(&self) -> Result<f64> {
        self.time(Phase::Total)
    }

    pub fn total_energy(&self) -> Result<f64> {
        self.energy_joules.get(&Phase::Total).copied().ok_or_else(|| MetricsError::MissingPhase {
            label: self.label.clone(),
            phase: Phase::Total,
        })
    }

    /// Checks non-negativity and that the total covers the listed sub-phases.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (kind, map) in [("seconds", &self.phase_times), ("joules", &self.energy_joules)] {
            for (p, v) in map {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(format!("{kind} for phase {p} is {v}"));
                }
            }
        }
        if let Some(total) = self.phase_times.get(&Phase::Total) {
            let sub: f64 = self
                .phase_times
                .iter()
                .filter(|(p, _)| **p != Phase::Total)
                .map(|(_, v)| v)
                .sum();
            if *total < sub - 1e-9 {
                return Err(format!("total time {total} is below the sum of phases {sub}"));
            }
        }
        Ok(())
    }
}

fn positive(what: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(MetricsError::NonPositive(format!("{what} ({x})")))
    }
}

/// `(T0/TN) / (alpha · EN/E0)`.
pub fn green_productivity(reference: &RunRecord, test: &RunRecord, alpha: f64) -> Result<f64> {
    let t0 = positive("reference time", reference.total_time()?)?;
    let e0 = positive("reference energy", reference.total_energy()?)?;
    let tn = positive("test time", test.total_time()?)?;
    let en = positive("test energy", test.total_energy()?)?;
    let alpha = positive("alpha", alpha)?;
    Ok((t0 / tn) / (alpha * en / e0))
}

/// Share of the total runtime spent reducing.
pub fn reduce_fraction(run: &RunRecord) -> Result<f64> {
    let total = positive("total time", run.total_time()?)?;
    Ok(run.time(Phase::Reduce)? / total)
}

fn comparable(base: &RunRecord, other: &RunRecord) -> Result<()> {
    if base.label != other.label || base.topology != other.topology {
        return Err(MetricsError::Mismatch(format!(
            "{} on {} vs {} on {}",
            base.label, base.topology, other.label, other.topology
        )));
    }
    Ok(())
}

/// `1 - E_other/E_base`.
pub fn energy_saving(base: &RunRecord, other: &RunRecord) -> Result<f64> {
    comparable(base, other)?;
    let e0 = positive("base energy", base.total_energy()?)?;
    Ok(1.0 - other.total_energy()? / e0)
}

/// `T_other/T_base - 1`.
pub fn perf_degradation(base: &RunRecord, other: &RunRecord) -> Result<f64> {
    comparable(base, other)?;
    let t0 = positive("base time", base.total_time()?)?;
    Ok(other.total_time()? / t0 - 1.0)
}
