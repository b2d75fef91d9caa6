//! Energy meters: injected traces, a constant-power model, or an external
//! cumulative joule counter read before and after a run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use super::{FreqLevel, MetricsError, Phase, Result, RunRecord};

/// Power draw per frequency level, watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelWatts {
    pub default: f64,
    pub high: f64,
    pub medium: f64,
    pub low: f64,
}

impl Default for LevelWatts {
    fn default() -> Self {
        Self {
            default: 200.0,
            high: 200.0,
            medium: 150.0,
            low: 140.0,
        }
    }
}

impl LevelWatts {
    pub fn get(&self, level: FreqLevel) -> f64 {
        match level {
            FreqLevel::Default => self.default,
            FreqLevel::High => self.high,
            FreqLevel::Medium => self.medium,
            FreqLevel::Low => self.low,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for l in FreqLevel::ALL {
            let w = self.get(l);
            if !(w > 0.0 && w.is_finite()) {
                return Err(MetricsError::NonPositive(format!("watts for {l} ({w})")));
            }
        }
        Ok(())
    }
}

/// Where a platform counter reading comes from: a file holding one number,
/// or a shell command printing one.
#[derive(Debug, Clone, PartialEq)]
pub enum CounterSource {
    File(PathBuf),
    Command(String),
}

impl CounterSource {
    pub fn read(&self) -> Result<f64> {
        let text = match self {
            CounterSource::File(p) => std::fs::read_to_string(p)
                .map_err(|e| MetricsError::Counter(format!("{}: {e}", p.display())))?,
            CounterSource::Command(cmd) => {
                let out = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .output()
                    .map_err(|e| MetricsError::Counter(format!("{cmd}: {e}")))?;
                if !out.status.success() {
                    return Err(MetricsError::Counter(format!("{cmd}: exited with {}", out.status)));
                }
                String::from_utf8_lossy(&out.stdout).into_owned()
            }
        };
        text.trim()
            .parse::<f64>()
            .map_err(|_| MetricsError::Counter(format!("cannot parse '{}' as joules", text.trim())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergyMeter {
    TraceInjection { runs: Vec<RunRecord> },
    SyntheticModel { watts: LevelWatts },
    PlatformCounters { source: CounterSource },
}

impl EnergyMeter {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EnergyMeter::TraceInjection { .. } => "trace_injection",
            EnergyMeter::SyntheticModel { .. } => "synthetic_model",
            EnergyMeter::PlatformCounters { .. } => "platform_counters",
        }
    }

    /// Reading to pass to [`EnergyMeter::measure`]; only counters need one.
    pub fn begin(&self) -> Result<Option<f64>> {
        match self {
            EnergyMeter::PlatformCounters { source } => source.read().map(Some),
            _ => Ok(None),
        }
    }

    /// Joules per phase for a run with the given phase durations.
    pub fn measure(
        &self,
        start: Option<f64>,
        label: &str,
        n_nodes: usize,
        freq: FreqLevel,
        durations: &BTreeMap<Phase, f64>,
    ) -> Result<BTreeMap<Phase, f64>> {
        if let Some((p, d)) = durations.iter().find(|(_, d)| !(**d >= 0.0)) {
            return Err(MetricsError::NonPositive(format!("duration of {p} ({d})")));
        }
        match self {
            EnergyMeter::SyntheticModel { watts } => {
                watts.validate()?;
                let w = watts.get(freq);
                Ok(durations.iter().map(|(p, s)| (*p, w * s)).collect())
            }
            EnergyMeter::TraceInjection { runs } => {
                let exact = runs
                    .iter()
                    .find(|r| r.label == label && r.n_nodes() == n_nodes && r.freq_level == freq);
                let by_label: Vec<_> = runs.iter().filter(|r| r.label == label).collect();
                let run = match (exact, by_label.as_slice()) {
                    (Some(r), _) => r,
                    (None, [only]) => *only,
                    _ => return Err(MetricsError::MissingTrace(format!("{label}/{n_nodes}/{freq}"))),
                };
                if run.energy_joules.is_empty() {
                    return Err(MetricsError::MissingTrace(format!("{label}: no joules recorded")));
                }
                Ok(run.energy_joules.clone())
            }
            EnergyMeter::PlatformCounters { source } => {
                let before = start.ok_or_else(|| MetricsError::Counter("no starting reading".into()))?;
                let after = source.read()?;
                if after < before {
                    return Err(MetricsError::Counter(format!("counter went backwards ({before} -> {after})")));
                }
                Ok(BTreeMap::from([(Phase::Total, after - before)]))
            }
        }
    }
}
