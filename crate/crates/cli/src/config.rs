//! Flat `key = value` configuration with a fixed key table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use wstack::comms::{ReduceKind, ReduceStrategy, Topology};
use wstack::gridder::{KernelKind, KernelSpec};
use wstack::metrics::{CounterSource, EnergyMeter, FreqLevel, LevelWatts};
use wstack::pipeline::ImagingConfig;
use wstack::visdata::{PointSource, SkyModel, SynthSpec};

use crate::CliError;

/// (key, default, description)
pub const KEYS: &[(&str, &str, &str)] = &[
    ("grid.n_u", "256", "mesh columns (power of two)"),
    ("grid.n_v", "256", "mesh rows (power of two)"),
    ("grid.n_w", "8", "number of w-planes"),
    ("grid.cell_size_lm", "auto", "pixel size in direction cosines; auto = 1/uv_extent of the dataset"),
    ("kernel.kind", "gaussian", "gaussian | kaiser_bessel"),
    ("kernel.half_support", "3", "kernel half width in cells"),
    ("kernel.shape_param", "auto", "Gaussian sigma (cells) or Kaiser-Bessel beta; auto = kind default"),
    ("topo.n_nodes", "1", "virtual nodes"),
    ("topo.ranks_per_node", "1", "ranks per node"),
    ("topo.threads_per_rank", "1", "gridding threads per rank"),
    ("reduce.kind", "hybrid_ring", "direct | hybrid_ring | ring_rdma_like"),
    ("reduce.deterministic", "true", "exact fixed-point accumulation (true) or concurrent float adds"),
    ("meter.kind", "synthetic_model", "none | synthetic_model | trace_injection | platform_counters"),
    ("meter.trace", "", "trace CSV for trace_injection"),
    ("meter.watts_default", "200", "synthetic power at the default level (W)"),
    ("meter.watts_high", "200", "synthetic power at the high level (W)"),
    ("meter.watts_medium", "150", "synthetic power at the medium level (W)"),
    ("meter.watts_low", "140", "synthetic power at the low level (W)"),
    ("meter.counter_file", "", "file holding a cumulative joule counter"),
    ("meter.counter_command", "", "shell command printing a cumulative joule counter"),
    ("bench.label", "bench", "run label prefix"),
    ("bench.repeats", "4", "repeats per configuration"),
    ("bench.topologies", "1x1,1x4", "comma-separated NxR or NxRxT list"),
    ("bench.strategies", "direct,hybrid_ring,ring_rdma_like", "comma-separated reduce kinds"),
    ("bench.freq_levels", "high", "comma-separated default | high | medium | low"),
    ("bench.clock", "wall", "wall | ops (deterministic work-count surrogate)"),
    ("bench.seconds_per_op", "1e-9", "seconds charged per counted operation with clock = ops"),
    ("bench.synthetic", "false", "benchmark a generated dataset instead of run.dataset"),
    ("run.dataset", "data.rvis", "input dataset"),
    ("run.out_dir", "out", "output directory"),
    ("run.pgm", "true", "write a PGM preview"),
    ("run.precision", "f64", "f64 | f32 grid and transform scalar"),
    ("run.n_chunks", "1", "frequency chunks read one after another"),
    ("run.freq_level", "default", "frequency level recorded for the run"),
    ("run.alpha", "1.0", "green productivity weight"),
    ("run.seed", "7", "generator seed"),
    ("gen.output", "data.rvis", "dataset written by gen"),
    ("gen.records", "10000", "records to generate"),
    ("gen.n_freq", "1", "frequency channels"),
    ("gen.n_corr", "1", "correlations per channel"),
    ("gen.time_slices", "8", "distinct time slices"),
    ("gen.uv_extent", "4096", "native wavelengths spanned by u and v"),
    ("gen.w_min", "-250", "native w at w = 0"),
    ("gen.w_max", "250", "native w at w = 1"),
    ("gen.sources", "0.005,0.0025,1", "point sources l,m,flux separated by ';'"),
    ("report.reference", "", "gp reference label; empty = first run"),
    ("report.cpu_label", "mpi", "CPU label for ratios"),
    ("report.gpu_label", "gpu", "GPU label for ratios"),
];

/// Text listing every key, for `--help`.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (file lines `key = value`, override with --set key=value):\n");
    for (k, d, h) in KEYS {
        let d = if d.is_empty() { "\"\"" } else { d };
        let _ = writeln!(s, "  {k:<24} {h} [default: {d}]");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect(),
        }
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(usage(format!("unknown config key '{key}'"))),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| usage(format!("{origin}:{}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = Self::default();
        c.merge_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    /// Every key in table order; loading the dump gives back this config.
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _, _)| format!("{k} = {}\n", self.values[*k]))
            .collect()
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} not in table"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>().map_err(|e| usage(format!("{key} = '{raw}': {e}")))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.raw(key) {
            "auto" | "" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    pub fn topology(&self) -> Result<Topology, CliError> {
        Topology::new(
            self.get("topo.n_nodes")?,
            self.get("topo.ranks_per_node")?,
            self.get("topo.threads_per_rank")?,
        )
        .map_err(usage)
    }

    /// Sets the node and rank keys (and threads when given) from `NxR[xT]`.
    pub fn set_topology(&mut self, text: &str) -> Result<(), CliError> {
        let t: Topology = text.parse().map_err(|e: String| usage(format!("--topo {text}: {e}")))?;
        self.set("topo.n_nodes", &t.n_nodes.to_string())?;
        self.set("topo.ranks_per_node", &t.ranks_per_node.to_string())?;
        if text.split('x').count() == 3 {
            self.set("topo.threads_per_rank", &t.threads_per_rank.to_string())?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        let kind: KernelKind = self.get("kernel.kind")?;
        let half_support: usize = self.get("kernel.half_support")?;
        let shape_param = self
            .opt_f64("kernel.shape_param")?
            .unwrap_or_else(|| KernelSpec::default_shape(kind, half_support));
        let k = KernelSpec {
            kind,
            half_support,
            shape_param,
        };
        k.validate().map_err(usage)?;
        Ok(k)
    }

    pub fn strategy(&self) -> Result<ReduceStrategy, CliError> {
        Ok(ReduceStrategy::new(self.get("reduce.kind")?, self.get("reduce.deterministic")?))
    }

    pub fn imaging(&self) -> Result<ImagingConfig, CliError> {
        let mut c = ImagingConfig::new(self.get("grid.n_u")?, self.get("grid.n_v")?, self.get("grid.n_w")?);
        c.cell_size_lm = self.opt_f64("grid.cell_size_lm")?;
        c.kernel = self.kernel()?;
        c.topo = self.topology()?;
        c.strategy = self.strategy()?;
        c.n_chunks = self.get("run.n_chunks")?;
        if c.n_chunks == 0 {
            return Err(usage("run.n_chunks must be at least 1"));
        }
        Ok(c)
    }

    pub fn watts(&self) -> Result<LevelWatts, CliError> {
        let w = LevelWatts {
            default: self.get("meter.watts_default")?,
            high: self.get("meter.watts_high")?,
            medium: self.get("meter.watts_medium")?,
            low: self.get("meter.watts_low")?,
        };
        w.validate().map_err(|e| usage(e.to_string()))?;
        Ok(w)
    }

    /// `None` when `meter.kind = none`.
    pub fn meter(&self) -> Result<Option<EnergyMeter>, CliError> {
        Ok(Some(match self.raw("meter.kind") {
            "none" => return Ok(None),
            "synthetic_model" => EnergyMeter::SyntheticModel { watts: self.watts()? },
            "trace_injection" => {
                let p = self.path("meter.trace");
                if self.raw("meter.trace").is_empty() {
                    return Err(usage("meter.kind = trace_injection needs meter.trace"));
                }
                let runs = wstack::metrics::read_trace(&p).map_err(CliError::from_metrics)?;
                EnergyMeter::TraceInjection { runs }
            }
            "platform_counters" => {
                let source = match (self.raw("meter.counter_file"), self.raw("meter.counter_command")) {
                    ("", "") => {
                        return Err(usage(
                            "meter.kind = platform_counters needs meter.counter_file or meter.counter_command",
                        ))
                    }
                    (f, "") => CounterSource::File(f.into()),
                    ("", c) => CounterSource::Command(c.into()),
                    _ => return Err(usage("set only one of meter.counter_file and meter.counter_command")),
                };
                EnergyMeter::PlatformCounters { source }
            }
            other => return Err(usage(format!("unknown meter.kind '{other}'"))),
        }))
    }

    pub fn sky(&self) -> Result<SkyModel, CliError> {
        let mut sources = Vec::new();
        for part in self.raw("gen.sources").split(';').filter(|s| !s.trim().is_empty()) {
            let nums: Vec<f64> = part
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("source '{part}' is not l,m,flux")))?;
            match nums.as_slice() {
                [l, m, f] => sources.push(PointSource::new(*l, *m, *f)),
                _ => return Err(usage(format!("source '{part}' is not l,m,flux"))),
            }
        }
        SkyModel::new(sources).map_err(|e| usage(e.to_string()))
    }

    pub fn synth(&self) -> Result<SynthSpec, CliError> {
        let records: usize = self.get("gen.records")?;
        if records == 0 {
            return Err(usage("--records must be at least 1"));
        }
        let mut s = SynthSpec::new(records, self.get("gen.n_freq")?, self.get("run.seed")?);
        s.n_corr = self.get("gen.n_corr")?;
        s.n_time_slices = self.get("gen.time_slices")?;
        s.uv_extent = self.get("gen.uv_extent")?;
        s.w_min_native = self.get("gen.w_min")?;
        s.w_max_native = self.get("gen.w_max")?;
        Ok(s)
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let items: Vec<T> = self
            .raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| usage(format!("{key}: '{s}': {e}"))))
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(usage(format!("{key} must list at least one value")));
        }
        Ok(items)
    }

    pub fn freq_level(&self) -> Result<FreqLevel, CliError> {
        self.get("run.freq_level")
    }

    pub fn reduce_kinds(&self) -> Result<Vec<ReduceKind>, CliError> {
        self.list("bench.strategies")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_then_load_is_identity() {
        let mut c = Config::default();
        c.set("grid.n_u", "64").unwrap();
        c.set("gen.sources", "0,0,1;0.01,-0.02,0.5").unwrap();
        c.set("meter.trace", "").unwrap();
        let mut back = Config::default();
        back.merge_text(&c.dump(), "dump").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.dump(), c.dump());
    }

    #[test]
    fn unknown_keys_and_bad_lines_rejected() {
        let mut c = Config::default();
        assert!(matches!(c.merge_text("grid.nu = 4\n", "f"), Err(CliError::Usage(_))));
        assert!(matches!(c.merge_text("just words\n", "f"), Err(CliError::Usage(_))));
        c.merge_text("# comment\n\n grid.n_w = 2  # trailing\n", "f").unwrap();
        assert_eq!(c.raw("grid.n_w"), "2");
    }

    #[test]
    fn typed_views() {
        let mut c = Config::default();
        c.set_topology("2x4x3").unwrap();
        assert_eq!(c.topology().unwrap(), Topology::new(2, 4, 3).unwrap());
        c.set_topology("1x2").unwrap();
        assert_eq!(c.topology().unwrap(), Topology::new(1, 2, 3).unwrap());
        assert_eq!(c.kernel().unwrap(), KernelSpec::default());
        c.set("kernel.kind", "kaiser_bessel").unwrap();
        assert_eq!(c.kernel().unwrap().shape_param, KernelSpec::default_shape(KernelKind::KaiserBessel, 3));
        c.set("gen.records", "0").unwrap();
        assert!(matches!(c.synth(), Err(CliError::Usage(_))));
        assert_eq!(c.sky().unwrap().sources().len(), 1);
        assert!(matches!(c.list::<FreqLevel>("bench.freq_levels"), Ok(v) if v == vec![FreqLevel::High]));
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        for (k, _, _) in KEYS {
            assert!(h.contains(k));
        }
    }
}
