//! Per-sector convolution of prepared visibility points onto a slab.

use num_complex::Complex;

use super::accum::{AtomicComplexSlab, FixedComplex, FixedOverflow};
use super::kernel::{bessel_i0, kb_axis, kernel_value, KernelKind, KernelSpec};
use super::{GridError, Result};
use crate::mesh::{uvw_to_cell, ComplexGrid, GridSpec, SlabRange};
use crate::scalar::Real;
use crate::visdata::VisRecord;

/// A visibility reduced to what the gridder needs: continuous cell
/// coordinates, target plane and the weighted, channel-summed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint<T> {
    pub gu: f64,
    pub gv: f64,
    pub plane: usize,
    pub value: Complex<T>,
    pub time_index: u32,
    /// Position of the source record in the global time-ordered input.
    pub order: u64,
    /// True when this is a boundary copy of a point owned by another sector.
    pub halo: bool,
}

impl<T: Real> GridPoint<T> {
    /// Maps a record onto the mesh and folds its channels into one value,
    /// weights applied before convolution: `sum_c vis_c * weight_c`.
    pub fn from_record(spec: &GridSpec, rec: &VisRecord, order: u64) -> Result<Self> {
        let cell = uvw_to_cell(spec, rec.u, rec.v, rec.w)?;
        let mut value = Complex::new(T::zero(), T::zero());
        for (v, w) in rec.vis.iter().zip(&rec.weight) {
            let w = T::lit(*w as f64);
            value.re += T::lit(v.re as f64) * w;
            value.im += T::lit(v.im as f64) * w;
        }
        Ok(Self {
            gu: cell.gu,
            gv: cell.gv,
            plane: cell.plane,
            value,
            time_index: rec.time_index,
            order,
            halo: false,
        })
    }
}

/// Points that touch one sector, in global (time_index, order) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBatch<T> {
    pub slab: SlabRange,
    pub points: Vec<GridPoint<T>>,
}

impl<T> SectorBatch<T> {
    pub fn new(slab: SlabRange) -> Self {
        Self {
            slab,
            points: Vec::new(),
        }
    }

    pub fn owned_len(&self) -> usize {
        self.points.iter().filter(|p| !p.halo).count()
    }
}

/// Inclusive cell index range covered by a support of `half` around `x`,
/// clipped to `[lo, hi)`.
#[inline]
fn footprint(x: f64, half: f64, lo: usize, hi: usize) -> Option<(usize, usize)> {
    let a = (x - half).ceil().max(lo as f64);
    let b = (x + half).floor().min(hi as f64 - 1.0);
    (a <= b).then_some((a as usize, b as usize))
}

/// Visits every slab cell inside the kernel footprint of `p` with its
/// contribution `p.value * G(gu - i, gv - j)`. Rows outside the slab and
/// cells outside the mesh are skipped.
pub(crate) struct Convolver<T> {
    kernel: KernelSpec,
    half: f64,
    kb_norm: T,
    axis_u: Vec<T>,
    axis_v: Vec<T>,
}

impl<T: Real> Convolver<T> {
    pub fn new(kernel: &KernelSpec) -> Self {
        let kb_norm = match kernel.kind {
            KernelKind::KaiserBessel => {
                let n = bessel_i0(T::lit(kernel.shape_param));
                n * n
            }
            KernelKind::Gaussian => T::one(),
        };
        Self {
            kernel: *kernel,
            half: kernel.half_support as f64,
            kb_norm,
            axis_u: Vec::new(),
            axis_v: Vec::new(),
        }
    }

    pub fn check(&self, spec: &GridSpec, slab: &SlabRange, p: &GridPoint<T>) -> Result<()> {
        let row = p.gv.floor();
        let lo = slab.v_start as f64 - self.half;
        let hi = slab.v_end() as f64 + self.half;
        if !(row >= lo && row < hi) || p.plane >= spec.n_w || !(p.gu >= 0.0 && p.gu < spec.n_u as f64)
        {
            return Err(GridError::OutsideSector {
                gv: p.gv,
                v_start: slab.v_start,
                v_end: slab.v_end(),
            });
        }
        Ok(())
    }

    /// Returns the number of cells updated.
    pub fn visit(
        &mut self,
        spec: &GridSpec,
        slab: &SlabRange,
        p: &GridPoint<T>,
        mut f: impl FnMut(usize, Complex<T>),
    ) -> u64 {
        let Some((i0, i1)) = footprint(p.gu, self.half, 0, spec.n_u) else {
            return 0;
        };
        let Some((j0, j1)) = footprint(p.gv, self.half, slab.v_start, slab.v_end()) else {
            return 0;
        };
        let plane_base = p.plane * slab.v_count;
        let s = T::lit(self.half);
        let beta = T::lit(self.kernel.shape_param);
        let kb = self.kernel.kind == KernelKind::KaiserBessel;
        if kb {
            self.axis_u.clear();
            self.axis_u
                .extend((i0..=i1).map(|i| kb_axis(s, beta, T::lit(p.gu - i as f64))));
            self.axis_v.clear();
            self.axis_v
                .extend((j0..=j1).map(|j| kb_axis(s, beta, T::lit(p.gv - j as f64))));
        }
        for j in j0..=j1 {
            let row = (plane_base + j - slab.v_start) * spec.n_u;
            let dv = T::lit(p.gv - j as f64);
            for i in i0..=i1 {
                let g = if kb {
                    (self.axis_u[i - i0] * self.axis_v[j - j0]) / self.kb_norm
                } else {
                    kernel_value(&self.kernel, T::lit(p.gu - i as f64), dv)
                };
                f(row + i, Complex::new(p.value.re * g, p.value.im * g));
            }
        }
        ((i1 - i0 + 1) * (j1 - j0 + 1)) as u64
    }
}

/// Adds the convolved contributions of every point in `batch` to `out`.
/// Returns the number of cell updates.
pub fn grid_sector<T: Real>(
    batch: &SectorBatch<T>,
    kernel: &KernelSpec,
    out: &mut ComplexGrid<T>,
) -> Result<u64> {
    kernel.validate().map_err(GridError::Kernel)?;
    if out.slab != batch.slab {
        return Err(GridError::SlabMismatch);
    }
    let spec = out.spec;
    let mut conv = Convolver::new(kernel);
    let mut updates = 0;
    for p in &batch.points {
        conv.check(&spec, &batch.slab, p)?;
        updates += conv.visit(&spec, &batch.slab, p, |idx, c| out.data[idx] += c);
    }
    Ok(updates)
}

fn split_points<T>(points: &[GridPoint<T>], threads: usize) -> Vec<&[GridPoint<T>]> {
    let threads = threads.max(1);
    let chunk = points.len().div_ceil(threads).max(1);
    points.chunks(chunk).collect()
}

fn check_all<T: Real>(
    spec: &GridSpec,
    batch: &SectorBatch<T>,
    kernel: &KernelSpec,
) -> Result<()> {
    kernel.validate().map_err(GridError::Kernel)?;
    let conv = Convolver::<T>::new(kernel);
    batch
        .points
        .iter()
        .try_for_each(|p| conv.check(spec, &batch.slab, p))
}

/// Deterministic gridding: each thread fills a private fixed-point slab and
/// the slabs are merged exactly. Bit-identical for any thread count.
pub fn grid_batch_exact<T: Real>(
    spec: &GridSpec,
    batch: &SectorBatch<T>,
    kernel: &KernelSpec,
    threads: usize,
) -> Result<(Vec<FixedComplex>, u64)> {
    check_all(spec, batch, kernel)?;
    let len = spec.n_u * batch.slab.v_count * spec.n_w;
    let parts: Vec<Result<(Vec<FixedComplex>, u64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = split_points(&batch.points, threads)
            .into_iter()
            .map(|pts| {
                s.spawn(move || {
                    let mut conv = Convolver::new(kernel);
                    let mut cells = vec![FixedComplex::ZERO; len];
                    let mut updates = 0;
                    let mut overflow: Option<FixedOverflow> = None;
                    for p in pts {
                        updates += conv.visit(spec, &batch.slab, p, |idx, c| {
                            match FixedComplex::from_complex(c)
                                .ok()
                                .and_then(|f| cells[idx].checked_add(f))
                            {
                                Some(v) => cells[idx] = v,
                                None => overflow = Some(FixedOverflow(c.re.to_f64_lossy())),
                            }
                        });
                    }
                    match overflow {
                        Some(e) => Err(GridError::Overflow(e)),
                        None => Ok((cells, updates)),
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("gridding thread panicked")).collect()
    });
    let mut out = vec![FixedComplex::ZERO; len];
    let mut updates = 0;
    for part in parts {
        let (cells, n) = part?;
        updates += n;
        for (o, c) in out.iter_mut().zip(cells) {
            *o = o.checked_add(c).ok_or(GridError::Overflow(FixedOverflow(f64::INFINITY)))?;
        }
    }
    Ok((out, updates))
}

/// Concurrent gridding: all threads add into one shared slab with atomic
/// compare-and-swap updates. Results vary in the last bits between runs.
pub fn grid_batch_concurrent<T: Real>(
    spec: &GridSpec,
    batch: &SectorBatch<T>,
    kernel: &KernelSpec,
    threads: usize,
) -> Result<(Vec<Complex<T>>, u64)> {
    check_all(spec, batch, kernel)?;
    let len = spec.n_u * batch.slab.v_count * spec.n_w;
    let shared = AtomicComplexSlab::zeros(len);
    let updates: u64 = std::thread::scope(|s| {
        let handles: Vec<_> = split_points(&batch.points, threads)
            .into_iter()
            .map(|pts| {
                let shared = &shared;
                s.spawn(move || {
                    let mut conv = Convolver::new(kernel);
                    pts.iter()
                        .map(|p| {
                            conv.visit(spec, &batch.slab, p, |idx, c| {
                                shared.add(idx, Complex::new(c.re.to_f64_lossy(), c.im.to_f64_lossy()))
                            })
                        })
                        .sum::<u64>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("gridding thread panicked")).sum()
    });
    Ok((shared.into_complex(), updates))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(16, 16, 2, 1e-3).unwrap()
    }

    fn point(gu: f64, gv: f64, value: Complex<f64>) -> GridPoint<f64> {
        GridPoint {
            gu,
            gv,
            plane: 0,
            value,
            time_index: 0,
            order: 0,
            halo: false,
        }
    }

    fn grid_one(p: GridPoint<f64>, k: &KernelSpec) -> ComplexGrid<f64> {
        let s = spec();
        let slab = SlabRange::full(&s);
        let mut out = ComplexGrid::zeros(s, slab);
        let batch = SectorBatch {
            slab,
            points: vec![p],
        };
        grid_sector(&batch, k, &mut out).unwrap();
        out
    }

    #[test]
    fn near_delta_kernel() {
        let out = grid_one(
            point(8.0, 8.0, Complex::new(3.0, 1.0)),
            &KernelSpec::gaussian(1, 1e-3),
        );
        let c = out.data[out.index(0, 8, 8)];
        assert_eq!(c, Complex::new(3.0, 1.0));
        for (i, j) in [(7, 8), (9, 8), (8, 7), (9, 9)] {
            assert!(out.data[out.index(0, j, i)].norm() < 1e-10);
        }
    }

    #[test]
    fn gaussian_unit_sigma_values() {
        // V = 2, w = 0.5 folded into the point value
        let out = grid_one(point(8.0, 8.0, Complex::new(1.0, 0.0)), &KernelSpec::gaussian(3, 1.0));
        let at = |i, j| out.data[out.index(0, j, i)].re;
        assert_eq!(at(8, 8), 1.0);
        for (i, j) in [(7, 8), (9, 8), (8, 7), (8, 9)] {
            assert!((at(i, j) - 0.606531).abs() < 1e-6);
        }
        assert!((at(9, 9) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn record_weighting() {
        let s = spec();
        let rec = VisRecord {
            u: 0.5,
            v: 0.5,
            w: 0.0,
            time_index: 0,
            vis: vec![num_complex::Complex32::new(2.0, 0.0)],
            weight: vec![0.5],
        };
        let p: GridPoint<f64> = GridPoint::from_record(&s, &rec, 0).unwrap();
        assert_eq!(p.value, Complex::new(1.0, 0.0));
        assert_eq!((p.gu, p.gv, p.plane), (8.0, 8.0, 0));
    }

    #[test]
    fn two_identical_points_double() {
        let s = spec();
        let slab = SlabRange::full(&s);
        let k = KernelSpec::kaiser_bessel(2, 4.68);
        let p = point(5.3, 9.7, Complex::new(0.7, -0.2));
        let one = grid_one(p, &k);
        let mut two = ComplexGrid::zeros(s, slab);
        grid_sector(&SectorBatch { slab, points: vec![p, p] }, &k, &mut two).unwrap();
        for (a, b) in one.data.iter().zip(&two.data) {
            assert_eq!(*a * 2.0, *b);
        }
    }

    #[test]
    fn edge_footprint_is_clipped() {
        let out = grid_one(point(0.2, 15.9, Complex::new(1.0, 0.0)), &KernelSpec::gaussian(3, 1.0));
        assert!(out.is_finite());
        let touched = out.data.iter().filter(|c| c.norm() > 0.0).count();
        // columns 0..=3, rows 13..=15
        assert_eq!(touched, 4 * 3);
    }

    #[test]
    fn outside_sector_rejected() {
        let s = spec();
        let slab = SlabRange {
            rank: 0,
            v_start: 0,
            v_count: 8,
        };
        let mut out = ComplexGrid::zeros(s, slab);
        let ok = SectorBatch {
            slab,
            points: vec![point(3.0, 10.5, Complex::new(1.0, 0.0))],
        };
        assert!(grid_sector(&ok, &KernelSpec::default(), &mut out).is_ok());
        let bad = SectorBatch {
            slab,
            points: vec![point(3.0, 11.0, Complex::new(1.0, 0.0))],
        };
        assert!(matches!(
            grid_sector(&bad, &KernelSpec::default(), &mut out),
            Err(GridError::OutsideSector { .. })
        ));
        let other = SectorBatch::<f64>::new(SlabRange { rank: 1, v_start: 8, v_count: 8 });
        assert!(matches!(
            grid_sector(&other, &KernelSpec::default(), &mut out),
            Err(GridError::SlabMismatch)
        ));
    }

    #[test]
    fn thread_count_independence_exact() {
        let s = spec();
        let slab = SlabRange::full(&s);
        let points: Vec<_> = (0..200)
            .map(|i| {
                let x = (i as f64 * 0.618_033_988_7).fract();
                let y = (i as f64 * 0.414_213_562_4).fract();
                let mut p = point(x * 16.0, y * 16.0, Complex::new(x - 0.5, y));
                p.plane = i % 2;
                p
            })
            .collect();
        let batch = SectorBatch { slab, points };
        let k = KernelSpec::default();
        let (one, n1) = grid_batch_exact(&s, &batch, &k, 1).unwrap();
        let (eight, n8) = grid_batch_exact(&s, &batch, &k, 8).unwrap();
        assert_eq!(one, eight);
        assert_eq!(n1, n8);
        let (conc, _) = grid_batch_concurrent::<f64>(&s, &batch, &k, 8).unwrap();
        let mut seq = ComplexGrid::zeros(s, slab);
        grid_sector(&batch, &k, &mut seq).unwrap();
        for ((a, b), c) in seq.data.iter().zip(&conc).zip(&one) {
            assert!((a - b).norm() <= 1e-12);
            assert!((a - c.to_complex::<f64>()).norm() <= 1e-12);
        }
    }
}
