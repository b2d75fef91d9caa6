#![allow(dead_code)]

use num_complex::{Complex, Complex32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wstack::gridder::KernelSpec;
use wstack::mesh::GridSpec;
use wstack::visdata::VisRecord;

/// Random records with `n_ch` channels, sorted by time slice.
pub fn random_records(n: usize, n_ch: usize, seed: u64) -> Vec<VisRecord> {
    random_records_in(n, n_ch, seed, 0.0, 1.0)
}

/// Same as [`random_records`] with u and v drawn from `[lo, hi)`.
pub fn random_records_in(n: usize, n_ch: usize, seed: u64, lo: f64, hi: f64) -> Vec<VisRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| VisRecord {
            u: rng.gen_range(lo..hi),
            v: rng.gen_range(lo..hi),
            w: rng.gen_range(0.0..=1.0),
            time_index: (i * 8 / n) as u32,
            vis: (0..n_ch)
                .map(|_| Complex32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            weight: (0..n_ch).map(|_| rng.gen_range(0.5..1.5)).collect(),
        })
        .collect()
}

/// Contiguous, near-equal split of a time-ordered record list.
pub fn split_records(records: &[VisRecord], parts: usize) -> Vec<Vec<VisRecord>> {
    let base = records.len() / parts;
    let extra = records.len() % parts;
    let mut out = Vec::new();
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(records[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Direct convolution of every record over every mesh cell it touches.
/// Returns the full mesh in (plane, row, column) order.
pub fn brute_force_grid(records: &[VisRecord], spec: &GridSpec, kernel: &KernelSpec) -> Vec<Complex<f64>> {
    let (nu, nv, nw) = (spec.n_u, spec.n_v, spec.n_w);
    let s = kernel.half_support as f64;
    let sigma = kernel.shape_param;
    let mut out = vec![Complex::new(0.0, 0.0); nu * nv * nw];
    for r in records {
        let gu = r.u * nu as f64;
        let gv = r.v * nv as f64;
        let plane = if nw == 1 { 0 } else { (r.w * (nw - 1) as f64 + 0.5).floor() as usize };
        let value: Complex<f64> = r
            .vis
            .iter()
            .zip(&r.weight)
            .map(|(v, w)| Complex::new(v.re as f64 * *w as f64, v.im as f64 * *w as f64))
            .sum();
        for j in 0..nv {
            for i in 0..nu {
                let du = gu - i as f64;
                let dv = gv - j as f64;
                if du.abs() <= s && dv.abs() <= s {
                    let g = (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
                    out[(plane * nv + j) * nu + i] += value * g;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Plain O(n^4) 2-D DFT with sign `-1` (forward) or `+1` (inverse, unscaled).
pub fn dft2d(data: &[Complex<f64>], n_u: usize, n_v: usize, sign: f64) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); data.len()];
    for kv in 0..n_v {
        for ku in 0..n_u {
            let mut acc = Complex::new(0.0, 0.0);
            for y in 0..n_v {
                for x in 0..n_u {
                    let ph = sign
                        * 2.0
                        * std::f64::consts::PI
                        * (((ku * x) % n_u) as f64 / n_u as f64 + ((kv * y) % n_v) as f64 / n_v as f64);
                    acc += data[y * n_u + x] * Complex::from_polar(1.0, ph);
                }
            }
            out[kv * n_u + ku] = acc;
        }
    }
    out
}

pub fn random_plane(len: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}
