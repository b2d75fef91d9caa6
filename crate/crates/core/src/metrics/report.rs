//! Report tables over sets of runs.
//!
//! CSV headers per kind:
//! * `gp`: label,n_nodes,freq_level,time_s,energy_j,speedup,energy_ratio,gp
//! * `reduce_fraction`: label,n_nodes,freq_level,reduce_s,total_s,reduce_fraction
//! * `freq`: label,n_nodes,freq_level,energy_saving,perf_degradation
//! * `ratios`: n_nodes,freq_level,energy_ratio,time_ratio
//! * `scaling_gp`: label,freq_level,n_nodes,gp
//!
//! `energy_ratio` in `gp` is E0/EN, the "times more green" factor. The GP
//! values reproduce the formula as written; for the single-node table they
//! give about 13.0 for the best hybrid run and 24.6 for the GPU run, even
//! though the two are described as having similar productivity.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::{
    energy_saving, green_productivity, perf_degradation, reduce_fraction, FreqLevel, MetricsError, Result,
    RunRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Gp,
    ReduceFraction,
    Freq,
    Ratios,
    ScalingGp,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] = [
        ReportKind::Gp,
        ReportKind::ReduceFraction,
        ReportKind::Freq,
        ReportKind::Ratios,
        ReportKind::ScalingGp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Gp => "gp",
            ReportKind::ReduceFraction => "reduce_fraction",
            ReportKind::Freq => "freq",
            ReportKind::Ratios => "ratios",
            ReportKind::ScalingGp => "scaling_gp",
        }
    }

    fn header(self) -> &'static [&'static str] {
        match self {
            ReportKind::Gp => &["label", "n_nodes", "freq_level", "time_s", "energy_j", "speedup", "energy_ratio", "gp"],
            ReportKind::ReduceFraction => &["label", "n_nodes", "freq_level", "reduce_s", "total_s", "reduce_fraction"],
            ReportKind::Freq => &["label", "n_nodes", "freq_level", "energy_saving", "perf_degradation"],
            ReportKind::Ratios => &["n_nodes", "freq_level", "energy_ratio", "time_ratio"],
            ReportKind::ScalingGp => &["label", "freq_level", "n_nodes", "gp"],
        }
    }
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown report '{s}' (gp, reduce_fraction, freq, ratios, scaling_gp)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
}

impl Cell {
    pub fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<FreqLevel> for Cell {
    fn from(l: FreqLevel) -> Self {
        Cell::Text(l.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: ReportKind,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn header(&self) -> &'static [&'static str] {
        self.kind.header()
    }

    /// Value of numeric column `name` in row `row`.
    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        let c = self.header().iter().position(|h| *h == name)?;
        self.rows.get(row)?.get(c)?.num()
    }

    /// Text of column `name` in row `row`.
    pub fn text(&self, row: usize, name: &str) -> Option<&str> {
        let c = self.header().iter().position(|h| *h == name)?;
        match self.rows.get(row)?.get(c)? {
            Cell::Text(s) => Some(s),
            Cell::Num(_) => None,
        }
    }

    /// Numbers at full precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Text(s) => s.clone(),
                Cell::Num(x) => x.to_string(),
            }))?;
        }
        w.flush().map_err(|source| MetricsError::Io {
            path: "<report>".into(),
            source,
        })
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(f)
    }

    /// Aligned plain-text table, numbers to 4 decimals.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Cell::Text(s) => s.clone(),
                        Cell::Num(x) => format!("{x:.4}"),
                    })
                    .collect()
            })
            .collect();
        let header = self.header();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, items: Vec<&str>| {
            let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, header.to_vec());
        for r in &cells {
            line(&mut out, r.iter().map(String::as_str).collect());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub alpha: f64,
    /// Label of the GP reference run; the first run when unset.
    pub reference: Option<String>,
    pub cpu_label: String,
    pub gpu_label: String,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            reference: None,
            cpu_label: "mpi".into(),
            gpu_label: "gpu".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub n_nodes: usize,
    pub freq_level: FreqLevel,
    /// E_cpu / E_gpu.
    pub energy_ratio: f64,
    /// T_cpu / T_gpu.
    pub time_ratio: f64,
}

/// CPU-over-GPU energy and time ratios at every node count of the GPU set.
/// Each CPU run at such a node count is paired with the GPU run at the same
/// frequency level, or the GPU run at the default level.
pub fn ratio_report(cpu_runs: &[RunRecord], gpu_runs: &[RunRecord]) -> Result<Vec<RatioRow>> {
    if cpu_runs.is_empty() || gpu_runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let mut nodes: Vec<usize> = gpu_runs.iter().map(RunRecord::n_nodes).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let mut rows = Vec::new();
    for n in nodes {
        let cpus: Vec<&RunRecord> = cpu_runs.iter().filter(|r| r.n_nodes() == n).collect();
        if cpus.is_empty() {
            return Err(MetricsError::Mismatch(format!("no CPU run on {n} nodes")));
        }
        for cpu in cpus {
            let gpu = gpu_runs
                .iter()
                .find(|g| g.n_nodes() == n && g.freq_level == cpu.freq_level)
                .or_else(|| gpu_runs.iter().find(|g| g.n_nodes() == n && g.freq_level == FreqLevel::Default))
                .ok_or_else(|| MetricsError::Mismatch(format!("no GPU run on {n} nodes for {}", cpu.freq_level)))?;
            let eg = gpu.total_energy()?;
            let tg = gpu.total_time()?;
            if eg <= 0.0 || tg <= 0.0 {
                return Err(MetricsError::NonPositive(format!("GPU totals on {n} nodes")));
            }
            rows.push(RatioRow {
                n_nodes: n,
                freq_level: cpu.freq_level,
                energy_ratio: cpu.total_energy()? / eg,
                time_ratio: cpu.total_time()? / tg,
            });
        }
    }
    Ok(rows)
}

/// GP of each run against the first, which has the fewest nodes.
pub fn scaling_gp_report(runs: &[RunRecord], alpha: f64) -> Result<Vec<(usize, f64)>> {
    let first = runs.first().ok_or(MetricsError::NoRuns)?;
    for w in runs.windows(2) {
        if w[1].n_nodes() <= w[0].n_nodes() {
            return Err(MetricsError::Unordered(format!("{} then {}", w[0].n_nodes(), w[1].n_nodes())));
        }
    }
    runs.iter()
        .map(|r| Ok((r.n_nodes(), green_productivity(first, r, alpha)?)))
        .collect()
}

/// Distinct (label, n_nodes) keys in first-appearance order.
fn groups(runs: &[RunRecord]) -> Vec<(String, usize)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in runs {
        let k = (r.label.clone(), r.n_nodes());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys
}

pub fn build_report(kind: ReportKind, runs: &[RunRecord], opts: &ReportOptions) -> Result<Report> {
    if runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    match kind {
        ReportKind::Gp => {
            let reference = match &opts.reference {
                Some(l) => runs
                    .iter()
                    .find(|r| &r.label == l)
                    .ok_or_else(|| MetricsError::MissingTrace(format!("reference run '{l}'")))?,
                None => &runs[0],
            };
            let (t0, e0) = (reference.total_time()?, reference.total_energy()?);
            for r in runs {
                let (t, e) = (r.total_time()?, r.total_energy()?);
                rows.push(vec![
                    r.label.as_str().into(),
                    r.n_nodes().into(),
                    r.freq_level.into(),
                    t.into(),
                    e.into(),
                    (t0 / t).into(),
                    (e0 / e).into(),
                    green_productivity(reference, r, opts.alpha)?.into(),
                ]);
            }
        }
        ReportKind::ReduceFraction => {
            for r in runs {
                rows.push(vec![
                    r.label.as_str().into(),
                    r.n_nodes().into(),
                    r.freq_level.into(),
                    r.time(super::Phase::Reduce)?.into(),
                    r.total_time()?.into(),
                    reduce_fraction(r)?.into(),
                ]);
            }
        }
        ReportKind::Freq => {
            for (label, n) in groups(runs) {
                let members: Vec<&RunRecord> =
                    runs.iter().filter(|r| r.label == label && r.n_nodes() == n).collect();
                let Some(base) = members.iter().find(|r| r.freq_level == FreqLevel::High) else {
                    continue;
                };
                for level in FreqLevel::ALL {
                    if let Some(r) = members.iter().find(|r| r.freq_level == level) {
                        rows.push(vec![
                            label.as_str().into(),
                            n.into(),
                            level.into(),
                            energy_saving(base, r)?.into(),
                            perf_degradation(base, r)?.into(),
                        ]);
                    }
                }
            }
            if rows.is_empty() {
                return Err(MetricsError::MissingTrace("a high-frequency base run".into()));
            }
        }
        ReportKind::Ratios => {
            let cpu: Vec<RunRecord> = runs.iter().filter(|r| r.label == opts.cpu_label).cloned().collect();
            let gpu: Vec<RunRecord> = runs.iter().filter(|r| r.label == opts.gpu_label).cloned().collect();
            if cpu.is_empty() || gpu.is_empty() {
                return Err(MetricsError::MissingTrace(format!(
                    "runs labelled '{}' and '{}'",
                    opts.cpu_label, opts.gpu_label
                )));
            }
            for row in ratio_report(&cpu, &gpu)? {
                rows.push(vec![
                    row.n_nodes.into(),
                    row.freq_level.into(),
                    row.energy_ratio.into(),
                    row.time_ratio.into(),
                ]);
            }
        }
        ReportKind::ScalingGp => {
            let mut series: Vec<(String, FreqLevel)> = Vec::new();
            for r in runs {
                let k = (r.label.clone(), r.freq_level);
                if !series.contains(&k) {
                    series.push(k);
                }
            }
            for (label, level) in series {
                let mut members: Vec<RunRecord> = runs
                    .iter()
                    .filter(|r| r.label == label && r.freq_level == level)
                    .cloned()
                    .collect();
                members.sort_by_key(RunRecord::n_nodes);
                for (n, gp) in scaling_gp_report(&members, opts.alpha)? {
                    rows.push(vec![label.as_str().into(), level.into(), n.into(), gp.into()]);
                }
            }
        }
    }
    Ok(Report { kind, rows })
}
