//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::time::Instant;

use common::{brute_force_grid, dft2d, max_abs_diff, random_plane};
use num_complex::Complex;
use wstack::bench::{run_plan, BenchPlan, Clock, DataSource};
use wstack::comms::{reduce_slabs, run_world, ReduceKind, ReduceStrategy, Topology};
use wstack::gridder::{gather_slabs, grid_all, KernelSpec};
use wstack::mesh::{slab_of, ComplexGrid, GridSpec, SlabRange};
use wstack::metrics::{
    build_report, green_productivity, parse_trace, read_trace, reduce_fraction, EnergyMeter, FreqLevel, LevelWatts,
    Phase, ReportKind, ReportOptions, RunRecord,
};
use wstack::pipeline::{run_pipeline, ImagingConfig, Source};
use wstack::transform::{
    apply_w_correction, fft2d, fft2d_slab, image_planes_rank, read_image, write_image, Direction, Provenance,
};
use wstack::visdata::{
    generate_synthetic, read_dataset_from, write_dataset_to, ChunkSpec, PointSource, SkyModel, SynthSpec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const TABLE2: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/table2.csv");
const MULTINODE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/multinode.csv");

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn split(records: &[wstack::visdata::VisRecord], parts: usize) -> Vec<Vec<wstack::visdata::VisRecord>> {
    common::split_records(records, parts)
}

fn gridding_oracle() -> Outcome {
    let spec = GridSpec::new(64, 64, 4, 1e-3).map_err(|e| e.to_string())?;
    let kernel = KernelSpec::gaussian(3, 1.0);
    let sky = SkyModel::new(vec![PointSource::new(0.01, -0.02, 1.0), PointSource::new(-0.03, 0.005, 0.5)])
        .map_err(|e| e.to_string())?;
    let (_, recs) = generate_synthetic(&sky, &SynthSpec::new(1000, 1, 2024)).map_err(|e| e.to_string())?;
    let strategy = ReduceStrategy::new(ReduceKind::HybridRing, true);

    let start = Instant::now();
    let mut grids = Vec::new();
    for (nodes, rpn) in [(1, 1), (1, 2), (2, 2)] {
        let topo = Topology::new(nodes, rpn, 1)?;
        let run = grid_all::<f64>(&split(&recs, topo.n_ranks()), &spec, &kernel, &topo, &strategy)
            .map_err(|e| e.to_string())?;
        grids.push(gather_slabs(&run.slabs));
    }
    let secs = start.elapsed().as_secs_f64();

    let oracle = brute_force_grid(&recs, &spec, &kernel);
    let err = max_abs_diff(&grids[0].data, &oracle);
    ensure(err <= 1e-12, || format!("max |grid - oracle| = {err:e}"))?;
    ensure(grids[1].data == grids[0].data && grids[2].data == grids[0].data, || {
        "ranks 1/2/4 not bit-identical".into()
    })?;
    ensure(secs < 5.0, || format!("runtime {secs:.2} s"))?;
    Ok(format!("max err {err:.1e}, 1/2/4 ranks bit-exact, {secs:.2} s"))
}

fn fft_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for n in [8usize, 16] {
        let x = random_plane(n * n, 40 + n as u64);
        let mut y = x.clone();
        fft2d(&mut y, n, n, Direction::Forward).ok_or("fft2d rejected size")?;
        worst = worst.max(max_abs_diff(&y, &dft2d(&x, n, n, -1.0)));
    }
    ensure(worst <= 1e-12, || format!("DFT mismatch {worst:e}"))?;

    let spec = GridSpec::new(64, 64, 1, 1e-3).map_err(|e| e.to_string())?;
    let x = random_plane(64 * 64, 7);
    let topo = Topology::new(1, 4, 1)?;
    let slabs: Vec<ComplexGrid<f64>> = (0..4)
        .map(|r| {
            let slab = slab_of(&spec, r, 4).unwrap();
            let lo = slab.v_start * 64;
            ComplexGrid {
                spec,
                slab,
                data: x[lo..lo + slab.v_count * 64].to_vec(),
            }
        })
        .collect();
    let (fwd, _) = fft2d_slab(slabs, &topo, Direction::Forward).map_err(|e| e.to_string())?;
    let freq: Vec<Complex<f64>> = fwd.iter().flat_map(|s| s.data.clone()).collect();
    let ex: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    let ef: f64 = freq.iter().map(|c| c.norm_sqr()).sum::<f64>() / (64.0 * 64.0);
    let parseval = (ex - ef).abs() / ex;
    let (back, _) = fft2d_slab(fwd, &topo, Direction::Inverse).map_err(|e| e.to_string())?;
    let back: Vec<Complex<f64>> = back.into_iter().flat_map(|s| s.data).collect();
    let rt = max_abs_diff(&back, &x);
    ensure(rt <= 1e-12, || format!("round trip {rt:e}"))?;
    ensure(parseval <= 1e-10, || format!("Parseval {parseval:e}"))?;
    Ok(format!("DFT err {worst:.1e}, round trip {rt:.1e}, Parseval {parseval:.1e}"))
}

fn reduce_equivalence() -> Outcome {
    let topo = Topology::new(4, 4, 1)?;
    let spec = GridSpec::new(32, 32, 2, 1e-3).map_err(|e| e.to_string())?;
    let slab = SlabRange {
        rank: 0,
        v_start: 0,
        v_count: 8,
    };
    let partials: Vec<ComplexGrid<f64>> = (0..16)
        .map(|r| ComplexGrid {
            spec,
            slab,
            data: random_plane(32 * 8 * 2, 900 + r),
        })
        .collect();
    let mut outs = Vec::new();
    for kind in [ReduceKind::Direct, ReduceKind::HybridRing, ReduceKind::RingRdmaLike] {
        outs.push(reduce_slabs(&ReduceStrategy::new(kind, true), &partials, 0, &topo).map_err(|e| e.to_string())?);
    }
    ensure(outs[0].0.data == outs[1].0.data && outs[0].0.data == outs[2].0.data, || {
        "strategies differ".into()
    })?;
    let hybrid = &outs[1].1;
    let direct = &outs[0].1;
    ensure(hybrid.inter_node_count() == topo.n_nodes - 1, || {
        format!("hybrid inter-node messages {}", hybrid.inter_node_count())
    })?;
    ensure(hybrid.inter_node_bytes() < direct.inter_node_bytes(), || {
        format!("hybrid {} B vs direct {} B", hybrid.inter_node_bytes(), direct.inter_node_bytes())
    })?;
    Ok(format!(
        "bit-exact; hybrid inter-node {} msgs / {} B, direct {} msgs / {} B",
        hybrid.inter_node_count(),
        hybrid.inter_node_bytes(),
        direct.inter_node_count(),
        direct.inter_node_bytes()
    ))
}

fn point_source() -> Outcome {
    let synth = SynthSpec::new(20_000, 1, 31);
    let cell = 1.0 / synth.uv_extent;
    let (ox, oy) = (37.3, -21.6);
    let sky = SkyModel::new(vec![PointSource::new(ox * cell, oy * cell, 1.0)]).map_err(|e| e.to_string())?;
    let (header, recs) = generate_synthetic(&sky, &synth).map_err(|e| e.to_string())?;
    let mut cfg = ImagingConfig::new(256, 256, 8);
    cfg.topo = Topology::new(2, 2, 1)?;
    let run = run_pipeline::<f64>(Source::Memory(&header, &recs), &cfg, None).map_err(|e| e.to_string())?;
    let (x, y) = run.image.argmax();
    let (ex, ey) = ((128.0 + ox).round() as i64, (128.0 + oy).round() as i64);
    ensure((x as i64 - ex).abs() <= 1 && (y as i64 - ey).abs() <= 1, || {
        format!("peak ({x}, {y}), expected ({ex}, {ey}) +/- 1")
    })?;

    // Phase-only check on the actual image planes of this dataset.
    let spec = cfg.grid_spec(&header).map_err(|e| e.to_string())?;
    let single = Topology::single();
    let strategy = ReduceStrategy::default();
    let gridded = grid_all::<f64>(&[recs], &spec, &cfg.kernel, &single, &strategy).map_err(|e| e.to_string())?;
    let full = gather_slabs(&gridded.slabs);
    let (mut imaged, _) = run_world(&single, |ctx| {
        let mut g = full.clone();
        image_planes_rank(ctx, &mut g).map(|_| g).map_err(|e| e.to_string())
    });
    let planes = imaged.pop().ok_or("no rank output")??;
    let mut corrected = planes.clone();
    for k in 0..spec.n_w {
        apply_w_correction(&mut corrected, k);
    }
    let worst = planes
        .data
        .iter()
        .zip(&corrected.data)
        .filter(|(a, _)| a.norm() > 0.0)
        .map(|(a, b)| (a.norm() - b.norm()).abs() / a.norm())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-14, || format!("|pixel| changed by {worst:e} relative"))?;
    Ok(format!("peak ({x}, {y}), expected ({ex}, {ey}); phase-only err {worst:.1e}"))
}

fn green_productivity_values() -> Outcome {
    let runs = read_trace(Path::new(TABLE2)).map_err(|e| e.to_string())?;
    let get = |label: &str| runs.iter().find(|r| r.label == label).ok_or(format!("no {label} run"));
    let (mpi, hybrid, gpu) = (get("mpi")?, get("hybrid_best")?, get("gpu")?);
    let mut notes = Vec::new();
    for (run, gp_t, sp_t, er_t) in [(hybrid, 13.04, 3.93, 3.32), (gpu, 24.60, 8.18, 3.01)] {
        let (t0, e0) = (mpi.total_time().unwrap(), mpi.total_energy().unwrap());
        let (t, e) = (run.total_time().unwrap(), run.total_energy().unwrap());
        let gp = green_productivity(mpi, run, 1.0).map_err(|e| e.to_string())?;
        let oracle = (t0 / t) * (e0 / e);
        ensure(within(gp, oracle, 1e-12 * oracle), || format!("GP {gp} vs oracle {oracle}"))?;
        ensure(within(gp, gp_t, 0.01), || format!("{}: GP {gp:.4} vs {gp_t}", run.label))?;
        ensure(within(t0 / t, sp_t, 0.01), || format!("{}: speedup {:.4}", run.label, t0 / t))?;
        ensure(within(e0 / e, er_t, 0.01), || format!("{}: energy ratio {:.4}", run.label, e0 / e))?;
        notes.push(format!("{} GP {gp:.4} speedup {:.4} energy {:.4}", run.label, t0 / t, e0 / e));
    }
    let direct = green_productivity(
        &RunRecord::from_totals("r", 1, 95.9533, 60837.5),
        &RunRecord::from_totals("t", 1, 24.4133, 18332.5),
        1.0,
    )
    .map_err(|e| e.to_string())?;
    ensure(within(direct, 13.04, 0.01), || format!("totals-only GP {direct}"))?;
    Ok(notes.join("; "))
}

fn reduce_fractions() -> Outcome {
    let t2 = read_trace(Path::new(TABLE2)).map_err(|e| e.to_string())?;
    let mpi = t2.iter().find(|r| r.label == "mpi").ok_or("no mpi run")?;
    let f = reduce_fraction(mpi).map_err(|e| e.to_string())?;
    let oracle = mpi.time(Phase::Reduce).unwrap() / mpi.total_time().unwrap();
    ensure(f == oracle && within(f, 0.8786, 1e-4), || format!("table run fraction {f}"))?;

    let multi = read_trace(Path::new(MULTINODE)).map_err(|e| e.to_string())?;
    let max_nodes = multi.iter().map(RunRecord::n_nodes).max().ok_or("empty trace")?;
    let mut at_max = Vec::new();
    for r in multi.iter().filter(|r| r.label == "mpi" && r.n_nodes() == max_nodes) {
        let x = reduce_fraction(r).map_err(|e| e.to_string())?;
        ensure((0.95..=0.96).contains(&x), || format!("{} nodes {}: {x:.4}", max_nodes, r.freq_level))?;
        at_max.push(x);
    }
    ensure(!at_max.is_empty(), || "no runs at the largest node count".into())?;
    Ok(format!("table run {f:.4}; {max_nodes} nodes {at_max:.4?}"))
}

fn frequency_reports() -> Outcome {
    let runs = read_trace(Path::new(MULTINODE)).map_err(|e| e.to_string())?;
    let rep = build_report(ReportKind::Freq, &runs, &ReportOptions::default()).map_err(|e| e.to_string())?;
    let (mut medium, mut low) = (0, 0);
    for row in 0..rep.rows.len() {
        let s = rep.value(row, "energy_saving").unwrap();
        let d = rep.value(row, "perf_degradation").unwrap();
        match rep.text(row, "freq_level") {
            Some("medium") => {
                medium += 1;
                ensure(within(s, 0.25, 1e-9) && (0.04..=0.05).contains(&d), || {
                    format!("medium row {row}: saving {s}, degradation {d}")
                })?;
            }
            Some("low") => {
                low += 1;
                ensure(within(s, 0.30, 1e-9) && (0.08..=0.10).contains(&d), || {
                    format!("low row {row}: saving {s}, degradation {d}")
                })?;
            }
            _ => {}
        }
    }
    ensure(medium > 0 && low > 0, || "missing medium or low rows".into())?;
    Ok(format!("{medium} medium rows at 0.25, {low} low rows at 0.30, degradations in range"))
}

fn scaling_gp() -> Outcome {
    let nodes = [1usize, 2, 4, 8, 16];
    let mut text = String::from("label,n_nodes,freq_level,phase,seconds,joules\n");
    for n in nodes {
        text += &format!("membound,{n},high,total,100,{}\n", 1000 * n);
        text += &format!("ideal,{n},high,total,{},1000\n", 100.0 / n as f64);
    }
    let runs = parse_trace(text.as_bytes()).map_err(|e| e.to_string())?;
    let rep = build_report(ReportKind::ScalingGp, &runs, &ReportOptions::default()).map_err(|e| e.to_string())?;
    let series = |label: &str| -> Vec<f64> {
        (0..rep.rows.len())
            .filter(|i| rep.text(*i, "label") == Some(label))
            .map(|i| rep.value(i, "gp").unwrap())
            .collect()
    };
    let (mem, ideal) = (series("membound"), series("ideal"));
    ensure(mem.len() == nodes.len() && ideal.len() == nodes.len(), || "missing rows".into())?;
    ensure(mem.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {mem:?}"))?;
    for (i, n) in nodes.iter().enumerate() {
        ensure(within(mem[i], 1.0 / *n as f64, 1e-12), || format!("membound {n}: {}", mem[i]))?;
        ensure(within(ideal[i], *n as f64, 1e-12), || format!("ideal {n}: {}", ideal[i]))?;
    }
    Ok(format!("memory-bound {mem:?}, ideal {ideal:?}"))
}

fn format_round_trips() -> Outcome {
    let sky = SkyModel::new(vec![PointSource::new(0.002, 0.001, 1.0)]).map_err(|e| e.to_string())?;
    let mut spec = SynthSpec::new(500, 4, 8);
    spec.n_corr = 2;
    let (header, recs) = generate_synthetic(&sky, &spec).map_err(|e| e.to_string())?;
    let mut a = Vec::new();
    write_dataset_to(&recs, &header, &mut a).map_err(|e| e.to_string())?;
    let (h2, r2) = read_dataset_from(a.as_slice(), ChunkSpec::WHOLE).map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_dataset_to(&r2, &h2, &mut b).map_err(|e| e.to_string())?;
    ensure(a == b, || "dataset bytes differ".into())?;

    let mut reassembled = recs.clone();
    for r in &mut reassembled {
        r.vis.clear();
        r.weight.clear();
    }
    for c in 0..3 {
        let (_, part) = read_dataset_from(a.as_slice(), ChunkSpec::frequency(c, 3)).map_err(|e| e.to_string())?;
        for (dst, src) in reassembled.iter_mut().zip(part) {
            dst.vis.extend(src.vis);
            dst.weight.extend(src.weight);
        }
    }
    ensure(reassembled == recs, || "frequency chunks do not reassemble".into())?;
    let by_time: Vec<_> = (0..4)
        .map(|c| read_dataset_from(a.as_slice(), ChunkSpec::time(c, 4)).map(|(_, r)| r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .concat();
    ensure(by_time == recs, || "time chunks do not reassemble".into())?;

    let cfg = ImagingConfig::new(32, 32, 2);
    let run = run_pipeline::<f64>(Source::Memory(&header, &recs), &cfg, None).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let prov = Provenance {
        kernel: "gaussian".into(),
        half_support: 3,
        shape_param: 1.0,
        topology: "1x1x1".into(),
        reduce: "hybrid_ring".into(),
        deterministic: true,
        seed: Some(8),
    };
    let p1 = dir.path().join("one.f64");
    let p2 = dir.path().join("two.f64");
    let s1 = write_image(&run.image, &prov, &p1).map_err(|e| e.to_string())?;
    let (img, side) = read_image(&p1).map_err(|e| e.to_string())?;
    let s2 = write_image(&img, &side.provenance, &p2).map_err(|e| e.to_string())?;
    let same = |x: &Path, y: &Path| std::fs::read(x).ok() == std::fs::read(y).ok();
    ensure(same(&p1, &p2) && same(&s1, &s2), || "image bytes differ".into())?;
    Ok(format!("dataset {} B, image {} px, chunks reassemble", a.len(), img.pixels.len()))
}

fn bench_protocol() -> Outcome {
    let mut plan = BenchPlan {
        label: "acc".into(),
        source: DataSource::Synthetic {
            sky: SkyModel::new(vec![PointSource::new(0.003, -0.002, 1.0)]).map_err(|e| e.to_string())?,
            spec: SynthSpec::new(2000, 1, 5),
        },
        imaging: ImagingConfig::new(64, 64, 4),
        topologies: vec![Topology::new(1, 2, 2)?],
        strategies: vec![ReduceStrategy::new(ReduceKind::HybridRing, true)],
        freq_levels: vec![FreqLevel::High],
        repeats: 4,
        meter: EnergyMeter::SyntheticModel {
            watts: LevelWatts::default(),
        },
        clock: Clock::Wall,
        out_dir: None,
    };
    let wall = run_plan(&plan).map_err(|e| e.to_string())?;
    ensure(wall.all_ok(), || "a wall-clock run failed".into())?;
    let records: Vec<&RunRecord> = wall.runs.iter().map(|r| &r.outcome.as_ref().unwrap().0).collect();
    ensure(records.len() == 4, || format!("{} runs", records.len()))?;
    let mut checked = 0;
    for agg in &wall.aggregates {
        let (kind, phase) = agg.metric.split_once('_').ok_or("bad metric name")?;
        let phase: Phase = phase.parse()?;
        let xs: Vec<f64> = records
            .iter()
            .filter_map(|r| if kind == "seconds" { r.phase_times.get(&phase) } else { r.energy_joules.get(&phase) })
            .copied()
            .collect();
        if xs.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for x in &xs {
            sum += x;
        }
        let mean = sum / xs.len() as f64;
        let mut ss = 0.0;
        for x in &xs {
            ss += (x - mean) * (x - mean);
        }
        let sd = (ss / (xs.len() - 1) as f64).sqrt();
        ensure(agg.n == xs.len() && agg.mean == mean && agg.stddev == sd, || {
            format!("{}: ({}, {}) vs ({mean}, {sd})", agg.metric, agg.mean, agg.stddev)
        })?;
        checked += 1;
    }
    ensure(wall.distinct_hashes().len() == 1, || "wall-clock image hashes differ".into())?;

    plan.clock = Clock::Ops { seconds_per_op: 1e-9 };
    let ops = run_plan(&plan).map_err(|e| e.to_string())?;
    ensure(ops.all_ok(), || "an ops-clock run failed".into())?;
    let spread: Vec<&str> = ops
        .aggregates
        .iter()
        .filter(|a| a.metric.starts_with("seconds_") && a.stddev != 0.0)
        .map(|a| a.metric.as_str())
        .collect();
    ensure(spread.is_empty(), || format!("non-zero spread in {spread:?}"))?;
    ensure(ops.distinct_hashes().len() == 1, || "ops-clock image hashes differ".into())?;
    Ok(format!("{checked} aggregates match recomputation; ops-clock stddev 0; one image hash"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gridding oracle equivalence", gridding_oracle),
        ("FFT oracle", fft_oracle),
        ("reduce-strategy equivalence", reduce_equivalence),
        ("end-to-end point-source recovery", point_source),
        ("green productivity reproduction", green_productivity_values),
        ("reduce fraction", reduce_fractions),
        ("frequency reports", frequency_reports),
        ("scaling GP report", scaling_gp),
        ("format round trips", format_round_trips),
        ("bench protocol", bench_protocol),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
