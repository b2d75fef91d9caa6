//! Oracle self-checks of the whole stack at a fixed scale.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::comms::{reduce_slabs, ReduceKind, ReduceStrategy, Topology};
use crate::gridder::{gather_slabs, grid_all, kernel_value, KernelSpec};
use crate::mesh::{slab_of, ComplexGrid, GridSpec, SlabRange};
use crate::pipeline::{run_pipeline, ImagingConfig, Source};
use crate::transform::{fft2d_slab, Direction};
use crate::visdata::{
    generate_synthetic, read_dataset, read_dataset_from, write_dataset_to, ChunkSpec, PointSource, SkyModel,
    SynthSpec, VisRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 64×64×4 mesh, 1000 records.
    Small,
    /// 256×256×8 mesh, 10⁵ records.
    Medium,
}

impl Scale {
    fn mesh(self) -> (usize, usize, usize) {
        match self {
            Scale::Small => (64, 1000, 4),
            Scale::Medium => (256, 100_000, 8),
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "small" => Ok(Scale::Small),
            "medium" => Ok(Scale::Medium),
            _ => Err(format!("unknown scale '{s}' (small, medium)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOptions {
    /// Dataset to read instead of the in-memory round trip.
    pub dataset: Option<PathBuf>,
    /// Adds a check that always fails.
    pub force_fail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub measured: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub scale: Scale,
    pub checks: Vec<CheckResult>,
    pub elapsed_secs: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<5} {:<22} measured {:.3e}  tolerance {:.1e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance,
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "{} checks, {} failed, {:.2} s",
            self.checks.len(),
            self.checks.iter().filter(|c| !c.passed).count(),
            self.elapsed_secs
        );
        s
    }
}

fn check(name: &'static str, tolerance: f64, measured: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        tolerance,
        measured,
        passed: measured <= tolerance,
        detail: detail.into(),
    }
}

fn failed(name: &'static str, tolerance: f64, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        tolerance,
        measured: f64::INFINITY,
        passed: false,
        detail: detail.into(),
    }
}

fn max_abs(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Direct convolution: every record against every cell of its footprint.
fn brute_force_grid(spec: &GridSpec, kernel: &KernelSpec, records: &[VisRecord]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); spec.n_w * spec.cells_per_plane()];
    let s = kernel.half_support as i64;
    for r in records {
        let value: Complex64 = r
            .vis
            .iter()
            .zip(&r.weight)
            .map(|(v, w)| Complex64::new(v.re as f64, v.im as f64) * *w as f64)
            .sum();
        let gu = r.u * spec.n_u as f64;
        let gv = r.v * spec.n_v as f64;
        let plane = if spec.n_w == 1 {
            0
        } else {
            ((r.w * (spec.n_w - 1) as f64 + 0.5).floor() as usize).min(spec.n_w - 1)
        };
        for j in (gv.floor() as i64 - s - 1)..=(gv.ceil() as i64 + s + 1) {
            for i in (gu.floor() as i64 - s - 1)..=(gu.ceil() as i64 + s + 1) {
                if i < 0 || j < 0 || i >= spec.n_u as i64 || j >= spec.n_v as i64 {
                    continue;
                }
                let k = kernel_value::<f64>(kernel, gu - i as f64, gv - j as f64);
                if k != 0.0 {
                    out[(plane * spec.n_v + j as usize) * spec.n_u + i as usize] += value * k;
                }
            }
        }
    }
    out
}

fn dft2(x: &[Complex64], n_u: usize, n_v: usize) -> Vec<Complex64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = vec![Complex64::new(0.0, 0.0); n_u * n_v];
    for ky in 0..n_v {
        for kx in 0..n_u {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..n_v {
                for xx in 0..n_u {
                    let ph = -tau * ((kx * xx) as f64 / n_u as f64 + (ky * y) as f64 / n_v as f64);
                    acc += x[y * n_u + xx] * Complex64::from_polar(1.0, ph);
                }
            }
            out[ky * n_u + kx] = acc;
        }
    }
    out
}

fn split_full(full: &ComplexGrid<f64>, n: usize) -> Vec<ComplexGrid<f64>> {
    let spec = full.spec;
    (0..n)
        .map(|r| {
            let slab = slab_of(&spec, r, n).expect("valid slab");
            let mut g = ComplexGrid::zeros(spec, slab);
            for k in 0..spec.n_w {
                for j in 0..slab.v_count {
                    let src = full.index(k, slab.v_start + j, 0);
                    let dst = g.index(k, j, 0);
                    g.data[dst..dst + spec.n_u].copy_from_slice(&full.data[src..src + spec.n_u]);
                }
            }
            g
        })
        .collect()
}

fn gridding_checks(scale: Scale) -> Vec<CheckResult> {
    let (n, n_rec, n_w) = scale.mesh();
    let sky = SkyModel::new(vec![PointSource::new(0.002, -0.001, 1.0), PointSource::new(-0.003, 0.002, 0.5)])
        .expect("valid sky");
    let (header, recs) = match generate_synthetic(&sky, &SynthSpec::new(n_rec, 1, 42)) {
        Ok(d) => d,
        Err(e) => return vec![failed("gridding_vs_oracle", 1e-12, e.to_string())],
    };
    let spec = match GridSpec::new(n, n, n_w, 1.0 / header.uv_extent_native) {
        Ok(s) => s,
        Err(e) => return vec![failed("gridding_vs_oracle", 1e-12, e.to_string())],
    };
    let kernel = KernelSpec::default();
    let oracle = brute_force_grid(&spec, &kernel, &recs);
    let mut grids = Vec::new();
    for topo in [Topology::single(), Topology::new(2, 2, 2).expect("valid topology")] {
        let per_rank = match crate::visdata::partition_time_ordered(&recs, topo.n_ranks()) {
            Ok(p) => p,
            Err(e) => return vec![failed("gridding_vs_oracle", 1e-12, e.to_string())],
        };
        match grid_all::<f64>(&per_rank, &spec, &kernel, &topo, &ReduceStrategy::default()) {
            Ok(run) => grids.push(gather_slabs(&run.slabs).data),
            Err(e) => return vec![failed("gridding_vs_oracle", 1e-12, e.to_string())],
        }
    }
    vec![
        check(
            "gridding_vs_oracle",
            1e-12,
            max_abs(&grids[1], &oracle),
            format!("{n_rec} records, {n}x{n}x{n_w}, 2x2 ranks vs direct convolution"),
        ),
        check(
            "gridding_rank_exact",
            0.0,
            max_abs(&grids[0], &grids[1]),
            "1 rank vs 4 ranks, deterministic",
        ),
    ]
}

fn fft_check(scale: Scale) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sizes: &[usize] = match scale {
        Scale::Small => &[8, 16],
        Scale::Medium => &[8, 16, 32],
    };
    let mut worst: f64 = 0.0;
    for &n in sizes {
        let spec = GridSpec::new(n, n, 1, 1e-3).expect("valid spec");
        let mut full = ComplexGrid::<f64>::zeros(spec, SlabRange::full(&spec));
        for x in &mut full.data {
            *x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let oracle = dft2(&full.data, n, n);
        let topo = Topology::new(1, 2, 1).expect("valid topology");
        match fft2d_slab(split_full(&full, 2), &topo, Direction::Forward) {
            Ok((slabs, _)) => worst = worst.max(max_abs(&gather_slabs(&slabs).data, &oracle)),
            Err(e) => return failed("fft_vs_dft", 1e-12, e.to_string()),
        }
    }
    check("fft_vs_dft", 1e-12, worst, format!("sizes {sizes:?}, 2 ranks vs direct DFT"))
}

fn reduce_check() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let topo = Topology::new(2, 2, 1).expect("valid topology");
    let spec = GridSpec::new(16, 16, 2, 1e-3).expect("valid spec");
    let slab = slab_of(&spec, 1, 4).expect("valid slab");
    let partials: Vec<ComplexGrid<f64>> = (0..4)
        .map(|_| {
            let mut g = ComplexGrid::zeros(spec, slab);
            for x in &mut g.data {
                *x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            g
        })
        .collect();
    let mut results = Vec::new();
    for kind in ReduceKind::ALL {
        match reduce_slabs(&ReduceStrategy::new(kind, true), &partials, 1, &topo) {
            Ok((g, _)) => results.push(g.data),
            Err(e) => return failed("reduce_equivalence", 0.0, e.to_string()),
        }
    }
    let d = max_abs(&results[0], &results[1]).max(max_abs(&results[0], &results[2]));
    check("reduce_equivalence", 0.0, d, "direct vs hybrid_ring vs ring_rdma_like, 2x2")
}

fn point_source_check(scale: Scale) -> CheckResult {
    let (n, n_rec, n_w) = scale.mesh();
    let spec = SynthSpec::new(n_rec, 1, 3);
    let cell = 1.0 / spec.uv_extent;
    let (dx, dy) = (n as i64 / 8, -(n as i64) / 16);
    let sky = match SkyModel::new(vec![PointSource::new(dx as f64 * cell, dy as f64 * cell, 1.0)]) {
        Ok(s) => s,
        Err(e) => return failed("point_source", 1.0, e.to_string()),
    };
    let (header, recs) = match generate_synthetic(&sky, &spec) {
        Ok(d) => d,
        Err(e) => return failed("point_source", 1.0, e.to_string()),
    };
    let mut cfg = ImagingConfig::new(n, n, n_w);
    cfg.topo = Topology::new(1, 2, 2).expect("valid topology");
    match run_pipeline::<f64>(Source::Memory(&header, &recs), &cfg, None) {
        Ok(run) => {
            let (x, y) = run.image.argmax();
            let want = ((n as i64 / 2 + dx), (n as i64 / 2 + dy));
            let dist = (x as i64 - want.0).abs().max((y as i64 - want.1).abs());
            check(
                "point_source",
                1.0,
                dist as f64,
                format!("argmax ({x}, {y}), expected {want:?}"),
            )
        }
        Err(e) => failed("point_source", 1.0, e.to_string()),
    }
}

fn dataset_check(opts: &VerifyOptions) -> CheckResult {
    if let Some(path) = &opts.dataset {
        return match read_dataset(path, ChunkSpec::WHOLE) {
            Ok((h, _)) => check("dataset_read", 0.0, 0.0, format!("{} records", h.n_records)),
            Err(e) => failed("dataset_read", 0.0, e.to_string()),
        };
    }
    let sky = SkyModel::new(vec![PointSource::new(0.01, 0.0, 1.0)]).expect("valid sky");
    let result = (|| {
        let (h, recs) = generate_synthetic(&sky, &SynthSpec::new(200, 2, 1))?;
        let mut bytes = Vec::new();
        write_dataset_to(&recs, &h, &mut bytes)?;
        let (h2, r2) = read_dataset_from(bytes.as_slice(), ChunkSpec::WHOLE)?;
        let mut again = Vec::new();
        write_dataset_to(&r2, &h2, &mut again)?;
        Ok::<_, crate::visdata::VisError>(bytes == again && r2 == recs)
    })();
    match result {
        Ok(true) => check("dataset_read", 0.0, 0.0, "in-memory write/read/write identical"),
        Ok(false) => failed("dataset_read", 0.0, "round trip changed the bytes"),
        Err(e) => failed("dataset_read", 0.0, e.to_string()),
    }
}

/// Runs every check; failures are recorded, never raised.
pub fn verify_pipeline(scale: Scale, opts: &VerifyOptions) -> VerifyReport {
    let t = Instant::now();
    let mut checks = gridding_checks(scale);
    checks.push(fft_check(scale));
    checks.push(reduce_check());
    checks.push(point_source_check(scale));
    checks.push(dataset_check(opts));
    if opts.force_fail {
        checks.push(failed("forced_failure", 0.0, "failure requested"));
    }
    VerifyReport {
        scale,
        checks,
        elapsed_secs: t.elapsed().as_secs_f64(),
    }
}
