//! Final image and its on-disk forms.
//!
//! * raw: `n_u * n_v` little-endian f64, row-major, row `y` (m axis) outer,
//!   column `x` (l axis) inner, row 0 first; no header.
//! * sidecar: pretty-printed JSON [`ImageSidecar`] next to the raw file
//!   (same stem, `.json`).
//! * preview: binary PGM (`P5`), 8-bit, rows in raw order, linear min-max
//!   stretch; a constant image maps to 0.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Result, TransformError};
use crate::mesh::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct FinalImage {
    pub spec: GridSpec,
    /// Row-major `n_v × n_u` pixels.
    pub pixels: Vec<f64>,
    /// Norm of the discarded imaginary part of the stacked sum.
    pub imag_residual_norm: f64,
}

impl FinalImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.spec.n_u + x]
    }

    /// Column and row of the largest pixel (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, p) in self.pixels.iter().enumerate() {
            if *p > self.pixels[best] {
                best = i;
            }
        }
        (best % self.spec.n_u, best / self.spec.n_u)
    }

    pub fn real_norm(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite())
    }

    pub fn raw_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    /// SHA-256 of the raw pixel bytes, lowercase hex.
    pub fn hash_hex(&self) -> String {
        Sha256::digest(self.raw_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Where an image came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kernel: String,
    pub half_support: usize,
    pub shape_param: f64,
    pub topology: String,
    pub reduce: String,
    pub deterministic: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub layout: String,
    pub n_u: usize,
    pub n_v: usize,
    pub n_w: usize,
    pub cell_size_lm: f64,
    pub w_min_native: f64,
    pub w_max_native: f64,
    pub imag_residual_norm: f64,
    pub sha256: String,
    pub provenance: Provenance,
}

const LAYOUT: &str = "f64le row-major n_v x n_u";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TransformError + '_ {
    move |source| TransformError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the raw pixel file and its JSON sidecar; returns the sidecar path.
pub fn write_image(img: &FinalImage, provenance: &Provenance, path: &Path) -> Result<PathBuf> {
    fs::write(path, img.raw_bytes()).map_err(io_err(path))?;
    let side = ImageSidecar {
        layout: LAYOUT.into(),
        n_u: img.spec.n_u,
        n_v: img.spec.n_v,
        n_w: img.spec.n_w,
        cell_size_lm: img.spec.cell_size_lm,
        w_min_native: img.spec.w_min_native,
        w_max_native: img.spec.w_max_native,
        imag_residual_norm: img.imag_residual_norm,
        sha256: img.hash_hex(),
        provenance: provenance.clone(),
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| TransformError::Sidecar(e.to_string()))?;
    let sp = sidecar_path(path);
    fs::write(&sp, json + "\n").map_err(io_err(&sp))?;
    Ok(sp)
}

/// Reads a raw image via its sidecar.
pub fn read_image(path: &Path) -> Result<(FinalImage, ImageSidecar)> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(io_err(&sp))?;
    let side: ImageSidecar = serde_json::from_str(&text).map_err(|e| TransformError::Sidecar(e.to_string()))?;
    let spec = GridSpec::new(side.n_u, side.n_v, side.n_w, side.cell_size_lm)?
        .with_w_range(side.w_min_native, side.w_max_native)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 8 * spec.cells_per_plane() {
        return Err(TransformError::Sidecar(format!(
            "raw file holds {} bytes, sidecar implies {}",
            bytes.len(),
            8 * spec.cells_per_plane()
        )));
    }
    let pixels = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let img = FinalImage {
        spec,
        pixels,
        imag_residual_norm: side.imag_residual_norm,
    };
    Ok((img, side))
}

/// 8-bit PGM bytes with a linear min-max stretch.
pub fn pgm_bytes(img: &FinalImage) -> Vec<u8> {
    let lo = img.pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", img.spec.n_u, img.spec.n_v).into_bytes();
    out.extend(img.pixels.iter().map(|p| {
        if span > 0.0 && span.is_finite() {
            ((p - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(img: &FinalImage, path: &Path) -> Result<()> {
    fs::write(path, pgm_bytes(img)).map_err(io_err(path))
}
