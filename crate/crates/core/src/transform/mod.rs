//! Per-plane 2D FFT over the slab decomposition, w-term phase correction,
//! plane stacking and image output.

mod fft;
mod image;

use std::sync::Mutex;

use num_complex::Complex;
use thiserror::Error;

use crate::comms::{run_world, MessageLog, Rank, Topology};
use crate::mesh::{pixel_to_lm, slab_of, ComplexGrid, GridSpec, MeshError, SlabRange};
use crate::scalar::Real;
use crate::split::balanced_range;

pub use fft::{fft2d, Direction, Fft};
pub use image::{read_image, write_image, write_pgm, FinalImage, ImageSidecar, Provenance};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("mesh dimensions {n_u}x{n_v} are not powers of two")]
    NotPowerOfTwo { n_u: usize, n_v: usize },
    #[error("expected {expected} slabs, got {got}")]
    SlabCount { expected: usize, got: usize },
    #[error("slabs do not tile the mesh in rank order")]
    SlabMismatch,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T> = std::result::Result<T, TransformError>;

/// Image-domain slab: same layout as a gridded slab, (plane, row, column).
pub type ImagePlane<T> = ComplexGrid<T>;

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Collective 2D FFT of every plane of this rank's slab: row transforms,
/// distributed transpose, row transforms, transpose back. The inverse is
/// scaled by `1/(n_u·n_v)`. Every rank of the world must call it.
pub fn fft2d_rank<T: Real>(ctx: &mut Rank, grid: &mut ComplexGrid<T>, dir: Direction) -> Result<()> {
    let spec = grid.spec;
    let (n_u, n_v, n_w) = (spec.n_u, spec.n_v, spec.n_w);
    let (row_fft, col_fft) = match (Fft::<T>::new(n_u), Fft::<T>::new(n_v)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TransformError::NotPowerOfTwo { n_u, n_v }),
    };
    let n = ctx.n_ranks();
    let me = ctx.rank();
    let rows: Vec<SlabRange> = (0..n).map(|p| slab_of(&spec, p, n)).collect::<std::result::Result<_, _>>()?;
    if rows[me] != grid.slab {
        return Err(TransformError::SlabMismatch);
    }
    let cols: Vec<_> = (0..n).map(|q| balanced_range(n_u, n, q)).collect();

    for r in grid.data.chunks_exact_mut(n_u) {
        row_fft.process(r, dir);
    }

    // forward transpose: (plane, v, u) slabs -> (plane, u, v) column blocks
    let my_cols = cols[me].clone();
    let nc = my_cols.len();
    let my_rows = grid.slab;
    let mut t = vec![zero::<T>(); n_w * nc * n_v];
    let block_out = |grid: &ComplexGrid<T>, q: usize| {
        let mut b = Vec::with_capacity(n_w * my_rows.v_count * cols[q].len());
        for k in 0..n_w {
            for j in 0..my_rows.v_count {
                let base = grid.index(k, j, 0);
                b.extend_from_slice(&grid.data[base + cols[q].start..base + cols[q].end]);
            }
        }
        b
    };
    let place_in = |t: &mut [Complex<T>], p: usize, block: &[Complex<T>]| {
        let src_rows = rows[p];
        let mut it = block.iter();
        for k in 0..n_w {
            for j in 0..src_rows.v_count {
                let v = src_rows.v_start + j;
                for c in 0..nc {
                    t[(k * nc + c) * n_v + v] = *it.next().expect("short transpose block");
                }
            }
        }
    };
    ctx.begin_collective();
    for q in (0..n).filter(|&q| q != me) {
        let b = block_out(grid, q);
        ctx.send(q, "transpose", 0, b);
    }
    place_in(&mut t, me, &block_out(grid, me));
    for p in (0..n).filter(|&p| p != me) {
        let b: Vec<Complex<T>> = ctx.recv(p, 0);
        place_in(&mut t, p, &b);
    }

    for r in t.chunks_exact_mut(n_v) {
        col_fft.process(r, dir);
    }

    // transpose back
    let back_out = |t: &[Complex<T>], p: usize| {
        let dst_rows = rows[p];
        let mut b = Vec::with_capacity(n_w * dst_rows.v_count * nc);
        for k in 0..n_w {
            for j in 0..dst_rows.v_count {
                let v = dst_rows.v_start + j;
                for c in 0..nc {
                    b.push(t[(k * nc + c) * n_v + v]);
                }
            }
        }
        b
    };
    let back_in = |grid: &mut ComplexGrid<T>, q: usize, block: &[Complex<T>]| {
        let mut it = block.iter();
        for k in 0..n_w {
            for j in 0..my_rows.v_count {
                let base = grid.index(k, j, 0);
                for col in cols[q].clone() {
                    grid.data[base + col] = *it.next().expect("short transpose block");
                }
            }
        }
    };
    ctx.begin_collective();
    for p in (0..n).filter(|&p| p != me) {
        let b = back_out(&t, p);
        ctx.send(p, "transpose", 0, b);
    }
    back_in(grid, me, &back_out(&t, me));
    for q in (0..n).filter(|&q| q != me) {
        let b: Vec<Complex<T>> = ctx.recv(q, 0);
        back_in(grid, q, &b);
    }

    if dir == Direction::Inverse {
        fft::scale(&mut grid.data, n_u * n_v);
    }
    Ok(())
}

/// Runs [`fft2d_rank`] over `topo` with `slabs[r]` owned by rank `r`.
pub fn fft2d_slab<T: Real>(
    slabs: Vec<ComplexGrid<T>>,
    topo: &Topology,
    dir: Direction,
) -> Result<(Vec<ImagePlane<T>>, MessageLog)> {
    let n = topo.n_ranks();
    if slabs.len() != n {
        return Err(TransformError::SlabCount {
            expected: n,
            got: slabs.len(),
        });
    }
    let spec = slabs[0].spec;
    for (r, s) in slabs.iter().enumerate() {
        if s.spec != spec || s.slab != slab_of(&spec, r, n)? {
            return Err(TransformError::SlabMismatch);
        }
    }
    let cells: Vec<Mutex<Option<ComplexGrid<T>>>> = slabs.into_iter().map(|s| Mutex::new(Some(s))).collect();
    let (outs, log) = run_world(topo, |ctx| {
        let mut g = cells[ctx.rank()].lock().unwrap().take().unwrap();
        fft2d_rank(ctx, &mut g, dir).map(|_| g)
    });
    Ok((outs.into_iter().collect::<Result<_>>()?, log))
}

/// Multiplies cell (row j, column i) by `(-1)^(i+j)`, with an extra global
/// sign flip when `negate`. Applied before and after the inverse transform it
/// moves the uv origin from cell `(n_u/2, n_v/2)` to index 0 and the image
/// phase centre back to pixel `(n_u/2, n_v/2)`.
pub fn checkerboard<T: Real>(grid: &mut ComplexGrid<T>, negate: bool) {
    let n_u = grid.spec.n_u;
    let v0 = grid.slab.v_start;
    for plane in grid.data.chunks_exact_mut(n_u * grid.slab.v_count) {
        for (j, row) in plane.chunks_exact_mut(n_u).enumerate() {
            for (i, x) in row.iter_mut().enumerate() {
                if ((i + v0 + j) % 2 == 1) != negate {
                    *x = -*x;
                }
            }
        }
    }
}

/// Sign that completes the centring of an inverse transform.
pub fn centering_negate(spec: &GridSpec) -> bool {
    (spec.n_u / 2 + spec.n_v / 2) % 2 == 1
}

/// Inverse transform of gridded slabs into centred image slabs.
pub fn image_planes_rank<T: Real>(ctx: &mut Rank, grid: &mut ComplexGrid<T>) -> Result<()> {
    checkerboard(grid, false);
    fft2d_rank(ctx, grid, Direction::Inverse)?;
    checkerboard(grid, centering_negate(&grid.spec));
    Ok(())
}

/// Multiplies plane `k` of an image slab by `e^{2πi w_k (√(1-l²-m²) - 1)}`.
pub fn apply_w_correction<T: Real>(img: &mut ImagePlane<T>, k: usize) {
    let spec = img.spec;
    let w = spec.plane_native_w(k);
    if w == 0.0 {
        return;
    }
    let slab = img.slab;
    let n_u = spec.n_u;
    let plane = img.plane_mut(k);
    for (j, row) in plane.chunks_exact_mut(n_u).enumerate() {
        for (i, x) in row.iter_mut().enumerate() {
            let (l, m) = pixel_to_lm(&spec, i, slab.v_start + j);
            let phase = 2.0 * std::f64::consts::PI * w * ((1.0 - l * l - m * m).sqrt() - 1.0);
            *x *= Complex::new(T::lit(phase.cos()), T::lit(phase.sin()));
        }
    }
}

/// Rank-local stacked rows of the final image.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSlab<T> {
    pub slab: SlabRange,
    pub pixels: Vec<T>,
    /// Σ over pixels of the squared imaginary part of the stacked sum.
    pub imag_sq: f64,
}

/// `I(l,m) = √(1-l²-m²)/n_w · Σ_k plane_k(l,m)`, real part kept.
pub fn stack_planes<T: Real>(img: &ImagePlane<T>) -> StackedSlab<T> {
    let spec = img.spec;
    let n_u = spec.n_u;
    let plane_len = img.plane_len();
    let mut sum = vec![zero::<T>(); plane_len];
    for k in 0..spec.n_w {
        for (s, x) in sum.iter_mut().zip(img.plane(k)) {
            *s += *x;
        }
    }
    let inv = 1.0 / spec.n_w as f64;
    let mut imag_sq = 0.0;
    let pixels = sum
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let (l, m) = pixel_to_lm(&spec, idx % n_u, img.slab.v_start + idx / n_u);
            let f = T::lit((1.0 - l * l - m * m).sqrt() * inv);
            let im = (s.im * f).to_f64_lossy();
            imag_sq += im * im;
            s.re * f
        })
        .collect();
    StackedSlab {
        slab: img.slab,
        pixels,
        imag_sq,
    }
}

/// Joins stacked slabs (rank order) into the full image.
pub fn assemble_image<T: Real>(spec: &GridSpec, slabs: &[StackedSlab<T>]) -> Result<FinalImage> {
    let mut pixels = Vec::with_capacity(spec.cells_per_plane());
    let mut next = 0;
    let mut imag_sq = 0.0;
    for s in slabs {
        if s.slab.v_start != next || s.pixels.len() != s.slab.v_count * spec.n_u {
            return Err(TransformError::SlabMismatch);
        }
        next = s.slab.v_end();
        pixels.extend(s.pixels.iter().map(|p| p.to_f64_lossy()));
        imag_sq += s.imag_sq;
    }
    if next != spec.n_v {
        return Err(TransformError::SlabMismatch);
    }
    Ok(FinalImage {
        spec: *spec,
        pixels,
        imag_residual_norm: imag_sq.sqrt(),
    })
}
