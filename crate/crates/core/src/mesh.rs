//! Mesh geometry, slab decomposition along v, and coordinate-to-cell mapping.

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::Real;
use crate::split::{balanced_owner, balanced_range};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("{n_ranks} ranks cannot split {n_v} rows")]
    TooManyRanks { n_ranks: usize, n_v: usize },
    #[error("coordinate out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, MeshError>;

/// Mesh of `n_u x n_v x n_w` cells. Normalized w spans [0, 1]; the native
/// w range is carried along so planes can be mapped back to wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_u: usize,
    pub n_v: usize,
    pub n_w: usize,
    /// Direction-cosine extent of one image pixel.
    pub cell_size_lm: f64,
    pub w_min_native: f64,
    pub w_max_native: f64,
}

impl GridSpec {
    pub fn new(n_u: usize, n_v: usize, n_w: usize, cell_size_lm: f64) -> Result<Self> {
        let spec = Self {
            n_u,
            n_v,
            n_w,
            cell_size_lm,
            w_min_native: 0.0,
            w_max_native: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_w_range(mut self, w_min_native: f64, w_max_native: f64) -> Result<Self> {
        self.w_min_native = w_min_native;
        self.w_max_native = w_max_native;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_u", self.n_u), ("n_v", self.n_v)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(MeshError::InvalidSpec(format!(
                    "{name} = {n} must be a power of two >= 2"
                )));
            }
        }
        if self.n_w < 1 {
            return Err(MeshError::InvalidSpec("n_w must be at least 1".into()));
        }
        if !(self.cell_size_lm > 0.0 && self.cell_size_lm.is_finite()) {
            return Err(MeshError::InvalidSpec(format!(
                "cell_size_lm = {} must be positive",
                self.cell_size_lm
            )));
        }
        let half_l = self.n_u as f64 * self.cell_size_lm / 2.0;
        let half_m = self.n_v as f64 * self.cell_size_lm / 2.0;
        if half_l * half_l + half_m * half_m >= 1.0 {
            return Err(MeshError::InvalidSpec(format!(
                "image half-extent ({half_l}, {half_m}) leaves the unit circle of direction cosines"
            )));
        }
        if !(self.w_min_native <= self.w_max_native) {
            return Err(MeshError::InvalidSpec("w_min_native > w_max_native".into()));
        }
        Ok(())
    }

    pub fn cells_per_plane(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn w_range_native(&self) -> f64 {
        self.w_max_native - self.w_min_native
    }

    /// Native w sampled by plane `k`: `w_min + k/(n_w-1) * range`, or the
    /// midpoint of the range when there is a single plane.
    pub fn plane_native_w(&self, k: usize) -> f64 {
        if self.n_w == 1 {
            0.5 * (self.w_min_native + self.w_max_native)
        } else {
            self.w_min_native + self.w_range_native() * k as f64 / (self.n_w - 1) as f64
        }
    }
}

/// Bytes needed for a full mesh with `bytes_per_component` per real/imaginary part.
pub fn mesh_bytes(n_u: u64, n_v: u64, n_w: u64, bytes_per_component: u64) -> u64 {
    n_u * n_v * n_w * 2 * bytes_per_component
}

/// Contiguous block of v rows owned by one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlabRange {
    pub rank: usize,
    pub v_start: usize,
    pub v_count: usize,
}

impl SlabRange {
    pub fn full(spec: &GridSpec) -> Self {
        Self {
            rank: 0,
            v_start: 0,
            v_count: spec.n_v,
        }
    }

    pub fn v_end(&self) -> usize {
        self.v_start + self.v_count
    }

    pub fn contains(&self, row: usize) -> bool {
        (self.v_start..self.v_end()).contains(&row)
    }
}

pub fn slab_of(spec: &GridSpec, rank: usize, n_ranks: usize) -> Result<SlabRange> {
    if n_ranks == 0 || n_ranks > spec.n_v {
        return Err(MeshError::TooManyRanks {
            n_ranks,
            n_v: spec.n_v,
        });
    }
    if rank >= n_ranks {
        return Err(MeshError::OutOfRange(format!(
            "rank {rank} >= n_ranks {n_ranks}"
        )));
    }
    let rows = balanced_range(spec.n_v, n_ranks, rank);
    Ok(SlabRange {
        rank,
        v_start: rows.start,
        v_count: rows.len(),
    })
}

/// Continuous cell coordinates of a record plus its nearest w-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoord {
    pub gu: f64,
    pub gv: f64,
    pub plane: usize,
}

pub fn uvw_to_cell(spec: &GridSpec, u: f64, v: f64, w: f64) -> Result<CellCoord> {
    if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) || !(0.0..=1.0).contains(&w) {
        return Err(MeshError::OutOfRange(format!("(u, v, w) = ({u}, {v}, {w})")));
    }
    let plane = if spec.n_w == 1 {
        0
    } else {
        let top = (spec.n_w - 1) as f64;
        // round half up
        ((w * top + 0.5).floor()).clamp(0.0, top) as usize
    };
    Ok(CellCoord {
        gu: u * spec.n_u as f64,
        gv: v * spec.n_v as f64,
        plane,
    })
}

/// Rank whose slab contains row `floor(gv)`.
pub fn owner_rank(spec: &GridSpec, gv: f64, n_ranks: usize) -> usize {
    debug_assert!(gv >= 0.0 && gv < spec.n_v as f64);
    let row = (gv.floor() as usize).min(spec.n_v - 1);
    balanced_owner(spec.n_v, n_ranks, row)
}

/// Direction cosines of image pixel (column i, row j); the phase centre is
/// pixel (n_u/2, n_v/2).
pub fn pixel_to_lm(spec: &GridSpec, i: usize, j: usize) -> (f64, f64) {
    (
        (i as f64 - (spec.n_u / 2) as f64) * spec.cell_size_lm,
        (j as f64 - (spec.n_v / 2) as f64) * spec.cell_size_lm,
    )
}

/// Complex values on one slab of the mesh, laid out (plane, v-row, u-column)
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid<T> {
    pub spec: GridSpec,
    pub slab: SlabRange,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> ComplexGrid<T> {
    pub fn zeros(spec: GridSpec, slab: SlabRange) -> Self {
        let len = spec.n_u * slab.v_count * spec.n_w;
        Self {
            spec,
            slab,
            data: vec![Complex::new(T::zero(), T::zero()); len],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.spec.n_u * self.slab.v_count
    }

    #[inline]
    pub fn index(&self, plane: usize, local_row: usize, col: usize) -> usize {
        (plane * self.slab.v_count + local_row) * self.spec.n_u + col
    }

    pub fn plane(&self, k: usize) -> &[Complex<T>] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [Complex<T>] {
        let n = self.plane_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, n_w: usize) -> GridSpec {
        GridSpec::new(n, n, n_w, 1e-4).unwrap()
    }

    #[test]
    fn table_one_single_node_slab() {
        let s = spec(4096, 64);
        assert_eq!(
            slab_of(&s, 3, 16).unwrap(),
            SlabRange {
                rank: 3,
                v_start: 768,
                v_count: 256
            }
        );
        assert_eq!(slab_of(&s, 0, 1).unwrap().v_count, 4096);
    }

    #[test]
    fn uneven_slabs() {
        // n_v must be a power of two for a GridSpec; exercise the rule directly
        let starts: Vec<_> = (0..4).map(|r| balanced_range(10, 4, r)).collect();
        assert_eq!(starts, vec![0..3, 3..6, 6..8, 8..10]);
        let s = spec(8, 1);
        let counts: Vec<_> = (0..3).map(|r| slab_of(&s, r, 3).unwrap().v_count).collect();
        assert_eq!(counts, vec![3, 3, 2]);
        assert!(matches!(slab_of(&s, 0, 9), Err(MeshError::TooManyRanks { .. })));
    }

    #[test]
    fn cell_mapping_examples() {
        let s = spec(4096, 24);
        assert_eq!(uvw_to_cell(&s, 0.5, 0.0, 0.0).unwrap().gu, 2048.0);
        assert_eq!(uvw_to_cell(&s, 0.0, 0.0, 1.0).unwrap().plane, 23);
        assert_eq!(uvw_to_cell(&s, 0.0, 0.0, 0.0).unwrap().plane, 0);
        let s2 = spec(64, 2);
        assert_eq!(uvw_to_cell(&s2, 0.0, 0.0, 0.49).unwrap().plane, 0);
        assert_eq!(uvw_to_cell(&s2, 0.0, 0.0, 0.51).unwrap().plane, 1);
        assert_eq!(uvw_to_cell(&s2, 0.0, 0.0, 0.5).unwrap().plane, 1);
        assert_eq!(uvw_to_cell(&spec(64, 1), 0.1, 0.1, 0.9).unwrap().plane, 0);
        assert!(uvw_to_cell(&s2, 1.0, 0.0, 0.0).is_err());
        assert!(uvw_to_cell(&s2, 0.0, 0.0, 1.01).is_err());
    }

    #[test]
    fn plane_monotone_in_w() {
        let s = spec(64, 7);
        let mut last = 0;
        for i in 0..=1000 {
            let p = uvw_to_cell(&s, 0.0, 0.0, i as f64 / 1000.0).unwrap().plane;
            assert!(p >= last);
            last = p;
        }
        assert_eq!(last, 6);
    }

    #[test]
    fn owner_examples_and_sweep() {
        let s = spec(4096, 1);
        assert_eq!(owner_rank(&s, 0.0, 16), 0);
        assert_eq!(owner_rank(&s, 4095.9, 16), 15);
        let s = spec(64, 1);
        for n_ranks in 1..=64 {
            for step in 0..(64 * 8) {
                let gv = step as f64 / 8.0;
                let r = owner_rank(&s, gv, n_ranks);
                assert!(slab_of(&s, r, n_ranks).unwrap().contains(gv.floor() as usize));
            }
        }
    }

    #[test]
    fn pixel_coordinates() {
        let s = GridSpec::new(4096, 4096, 1, 1e-4).unwrap();
        assert_eq!(pixel_to_lm(&s, 2048, 2048), (0.0, 0.0));
        let (l, m) = pixel_to_lm(&s, 0, 2048);
        assert!((l + 0.2048).abs() < 1e-15 && m == 0.0);
        let s = spec(16, 1);
        for i in 1..16 {
            for j in 1..16 {
                let (l, m) = pixel_to_lm(&s, i, j);
                let (l2, m2) = pixel_to_lm(&s, 16 - i, 16 - j);
                assert_eq!((l, m), (-l2, -m2));
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(100, 64, 1, 1e-4).is_err());
        assert!(GridSpec::new(64, 64, 0, 1e-4).is_err());
        assert!(GridSpec::new(64, 64, 1, 0.03).is_err());
        assert!(GridSpec::new(64, 64, 1, 0.02).is_ok());
    }

    #[test]
    fn plane_native_w_samples() {
        let s = spec(8, 5).with_w_range(-100.0, 100.0).unwrap();
        assert_eq!(s.plane_native_w(0), -100.0);
        assert_eq!(s.plane_native_w(2), 0.0);
        assert_eq!(s.plane_native_w(4), 100.0);
        let one = spec(8, 1).with_w_range(10.0, 30.0).unwrap();
        assert_eq!(one.plane_native_w(0), 20.0);
    }

    #[test]
    fn mesh_memory_arithmetic() {
        // 16384^2 x 24 cells, 8-byte real and imaginary parts
        assert_eq!(mesh_bytes(16384, 16384, 24, 8), 103_079_215_104);
        assert_eq!(mesh_bytes(4096, 4096, 64, 8), 17_179_869_184);
    }
}
