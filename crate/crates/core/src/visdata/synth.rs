//! Point-source visibility simulator used as the end-to-end oracle.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetHeader, Result, VisError, VisRecord};

/// PRNG id written into the dataset header for generated data.
pub const PRNG_CHACHA8: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    pub l: f64,
    pub m: f64,
    pub flux: f64,
}

impl PointSource {
    pub fn new(l: f64, m: f64, flux: f64) -> Self {
        Self { l, m, flux }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkyModel {
    sources: Vec<PointSource>,
}

impl SkyModel {
    pub fn new(sources: Vec<PointSource>) -> Result<Self> {
        if sources.is_empty() {
            return Err(VisError::InvalidSky("sky model has no sources".into()));
        }
        for s in &sources {
            if !(s.l * s.l + s.m * s.m < 1.0) || !s.flux.is_finite() {
                return Err(VisError::InvalidSky(format!(
                    "source at (l={}, m={}) must satisfy l^2 + m^2 < 1 with finite flux",
                    s.l, s.m
                )));
            }
        }
        Ok(Self { sources })
    }

    pub fn sources(&self) -> &[PointSource] {
        &self.sources
    }

    /// Visibility of the sky at native baseline coordinates (wavelengths).
    pub fn visibility(&self, u: f64, v: f64, w: f64) -> Complex64 {
        self.sources
            .iter()
            .map(|s| {
                let n = (1.0 - s.l * s.l - s.m * s.m).sqrt();
                let phase = -2.0 * PI * (u * s.l + v * s.m + w * (n - 1.0));
                Complex64::from_polar(s.flux / n, phase)
            })
            .sum()
    }
}

/// Generator settings. `uv_extent` is the native span (wavelengths) of the
/// normalized u and v axes; native u is `(u - 0.5) * uv_extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_records: usize,
    pub n_freq: u32,
    pub n_corr: u32,
    pub n_time_slices: u32,
    pub uv_extent: f64,
    pub w_min_native: f64,
    pub w_max_native: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n_records: usize, n_freq: u32, seed: u64) -> Self {
        Self {
            n_records,
            n_freq,
            n_corr: 1,
            n_time_slices: 8,
            uv_extent: 4096.0,
            w_min_native: -250.0,
            w_max_native: 250.0,
            seed,
        }
    }
}

/// Draws seeded uniform (u, v, w) samples and evaluates the point-source
/// visibility integral at each. Records come out sorted by time slice with
/// unit weights; every channel carries the same value.
pub fn generate_synthetic(sky: &SkyModel, spec: &SynthSpec) -> Result<(DatasetHeader, Vec<VisRecord>)> {
    if spec.n_records == 0 {
        return Err(VisError::InvalidSynth("n_records must be at least 1".into()));
    }
    if spec.n_freq == 0 || spec.n_corr == 0 || spec.n_time_slices == 0 {
        return Err(VisError::InvalidSynth(
            "n_freq, n_corr and n_time_slices must be at least 1".into(),
        ));
    }
    if !(spec.uv_extent > 0.0 && spec.uv_extent.is_finite()) {
        return Err(VisError::InvalidSynth("uv_extent must be positive".into()));
    }
    if !(spec.w_min_native <= spec.w_max_native) {
        return Err(VisError::InvalidSynth("w_min_native > w_max_native".into()));
    }

    let mut header = DatasetHeader::new(
        spec.n_records as u64,
        spec.n_freq,
        spec.n_corr,
        spec.n_time_slices,
    );
    header.w_min_native = spec.w_min_native;
    header.w_max_native = spec.w_max_native;
    header.uv_extent_native = spec.uv_extent;
    header.prng_id = PRNG_CHACHA8;
    header.seed = spec.seed;

    let n_ch = header.n_channels();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let records = (0..spec.n_records)
        .map(|i| {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let w: f64 = rng.gen();
            let vis = sky.visibility(
                (u - 0.5) * spec.uv_extent,
                (v - 0.5) * spec.uv_extent,
                header.native_w(w),
            );
            let time_index = (i as u64 * spec.n_time_slices as u64 / spec.n_records as u64) as u32;
            VisRecord {
                u,
                v,
                w,
                time_index,
                vis: vec![Complex32::new(vis.re as f32, vis.im as f32); n_ch],
                weight: vec![1.0; n_ch],
            }
        })
        .collect();
    Ok((header, records))
}
