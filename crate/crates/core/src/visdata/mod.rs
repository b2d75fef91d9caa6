//! Visibility records, the `RVIS` binary dataset format, chunked ingestion,
//! time-ordered partitioning and a point-source visibility simulator.

mod format;
mod synth;

use std::path::PathBuf;

use num_complex::Complex32;
use thiserror::Error;

use crate::split::balanced_range;

pub use format::{
    read_dataset, read_dataset_from, read_header, record_bytes, write_dataset, write_dataset_to, HEADER_BYTES,
    MAGIC, VERSION,
};
pub use synth::{generate_synthetic, PointSource, SkyModel, SynthSpec, PRNG_CHACHA8};

#[derive(Debug, Error)]
pub enum VisError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("header/record count mismatch: {0}")]
    CountMismatch(String),
    #[error("bad magic {0:?}, expected \"RVIS\"")]
    BadMagic([u8; 4]),
    #[error("version mismatch: file has {found}, reader supports {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("trailing bytes after last record")]
    TrailingBytes,
    #[error("chunk index {index} out of range for {n_chunks} chunks")]
    ChunkOutOfRange { index: usize, n_chunks: usize },
    #[error("cannot split {len} {axis} into {n_chunks} chunks")]
    TooManyChunks {
        axis: &'static str,
        len: usize,
        n_chunks: usize,
    },
    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("records are not sorted by time_index (record {0})")]
    Unsorted(usize),
    #[error("invalid sky model: {0}")]
    InvalidSky(String),
    #[error("invalid generator settings: {0}")]
    InvalidSynth(String),
}

pub type Result<T> = std::result::Result<T, VisError>;

/// One baseline sample: normalized (u, v, w), its time slice, and the
/// per-channel complex visibilities with their weights.
///
/// Channel index order inside `vis` and `weight` is `f * n_corr + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisRecord {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub time_index: u32,
    pub vis: Vec<Complex32>,
    pub weight: Vec<f32>,
}

impl VisRecord {
    /// Checks the coordinate bounds, channel count and weight rules.
    pub fn validate(&self, n_channels: usize) -> std::result::Result<(), String> {
        if !(self.u >= 0.0 && self.u < 1.0) {
            return Err(format!("u = {} outside [0, 1)", self.u));
        }
        if !(self.v >= 0.0 && self.v < 1.0) {
            return Err(format!("v = {} outside [0, 1)", self.v));
        }
        if !(self.w >= 0.0 && self.w <= 1.0) {
            return Err(format!("w = {} outside [0, 1]", self.w));
        }
        if self.vis.len() != n_channels || self.weight.len() != n_channels {
            return Err(format!(
                "expected {n_channels} channels, got {} visibilities and {} weights",
                self.vis.len(),
                self.weight.len()
            ));
        }
        if let Some(w) = self.weight.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(format!("weight {w} is negative or non-finite"));
        }
        Ok(())
    }
}

/// Dataset-level metadata stored in the 64-byte header block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub n_records: u64,
    pub n_freq: u32,
    pub n_corr: u32,
    pub n_time_slices: u32,
    pub w_min_native: f64,
    pub w_max_native: f64,
    /// Native extent (wavelengths) spanned by normalized u and v; 0 when unknown.
    pub uv_extent_native: f64,
    /// Generator PRNG id (0 = not generated).
    pub prng_id: u32,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn new(n_records: u64, n_freq: u32, n_corr: u32, n_time_slices: u32) -> Self {
        Self {
            version: VERSION,
            n_records,
            n_freq,
            n_corr,
            n_time_slices,
            w_min_native: 0.0,
            w_max_native: 0.0,
            uv_extent_native: 0.0,
            prng_id: 0,
            seed: 0,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.n_freq as usize * self.n_corr as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_records < 1 {
            return Err(VisError::CountMismatch("n_records must be at least 1".into()));
        }
        if self.n_freq < 1 || self.n_corr < 1 || self.n_time_slices < 1 {
            return Err(VisError::InvalidHeader(
                "n_freq, n_corr and n_time_slices must be at least 1".into(),
            ));
        }
        if !(self.w_min_native <= self.w_max_native) {
            return Err(VisError::InvalidHeader(format!(
                "w_min_native {} > w_max_native {}",
                self.w_min_native, self.w_max_native
            )));
        }
        if !(self.uv_extent_native >= 0.0 && self.uv_extent_native.is_finite()) {
            return Err(VisError::InvalidHeader(format!(
                "uv_extent_native {} must be finite and >= 0",
                self.uv_extent_native
            )));
        }
        Ok(())
    }

    /// Native w for a normalized coordinate.
    pub fn native_w(&self, w: f64) -> f64 {
        self.w_min_native + w * (self.w_max_native - self.w_min_native)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkAxis {
    Frequency,
    Time,
}

/// Which slice of a dataset one read returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpec {
    pub axis: ChunkAxis,
    pub chunk_index: usize,
    pub n_chunks: usize,
}

impl ChunkSpec {
    pub const WHOLE: ChunkSpec = ChunkSpec {
        axis: ChunkAxis::Frequency,
        chunk_index: 0,
        n_chunks: 1,
    };

    pub fn frequency(chunk_index: usize, n_chunks: usize) -> Self {
        Self {
            axis: ChunkAxis::Frequency,
            chunk_index,
            n_chunks,
        }
    }

    pub fn time(chunk_index: usize, n_chunks: usize) -> Self {
        Self {
            axis: ChunkAxis::Time,
            chunk_index,
            n_chunks,
        }
    }

    pub(crate) fn check(&self, header: &DatasetHeader) -> Result<std::ops::Range<usize>> {
        if self.n_chunks == 0 || self.chunk_index >= self.n_chunks {
            return Err(VisError::ChunkOutOfRange {
                index: self.chunk_index,
                n_chunks: self.n_chunks,
            });
        }
        let (axis, len) = match self.axis {
            ChunkAxis::Frequency => ("frequency channels", header.n_freq as usize),
            ChunkAxis::Time => ("time slices", header.n_time_slices as usize),
        };
        if self.n_chunks > len {
            return Err(VisError::TooManyChunks {
                axis,
                len,
                n_chunks: self.n_chunks,
            });
        }
        Ok(balanced_range(len, self.n_chunks, self.chunk_index))
    }
}

/// Splits time-sorted records into `n_ranks` contiguous runs of whole time
/// slices. Slices are the distinct `time_index` values present; rank `r`
/// gets `ceil(S/R)` slices for `r < S % R`, else `floor(S/R)`.
pub fn partition_time_ordered(records: &[VisRecord], n_ranks: usize) -> Result<Vec<Vec<VisRecord>>> {
    if n_ranks == 0 {
        return Err(VisError::InvalidSynth("n_ranks must be at least 1".into()));
    }
    if let Some(i) = records
        .windows(2)
        .position(|p| p[1].time_index < p[0].time_index)
    {
        return Err(VisError::Unsorted(i + 1));
    }
    // start offset of each distinct slice
    let mut slice_starts = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if i == 0 || records[i - 1].time_index != r.time_index {
            slice_starts.push(i);
        }
    }
    let n_slices = slice_starts.len();
    let record_offset = |slice: usize| {
        if slice >= n_slices {
            records.len()
        } else {
            slice_starts[slice]
        }
    };
    Ok((0..n_ranks)
        .map(|rank| {
            let slices = balanced_range(n_slices, n_ranks, rank);
            records[record_offset(slices.start)..record_offset(slices.end)].to_vec()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u32) -> VisRecord {
        VisRecord {
            u: 0.1,
            v: 0.2,
            w: 0.3,
            time_index: t,
            vis: vec![Complex32::new(1.0, 0.0)],
            weight: vec![1.0],
        }
    }

    fn slice_counts(parts: &[Vec<VisRecord>]) -> Vec<usize> {
        parts
            .iter()
            .map(|p| {
                let mut ts: Vec<u32> = p.iter().map(|r| r.time_index).collect();
                ts.dedup();
                ts.len()
            })
            .collect()
    }

    #[test]
    fn eight_slices_eight_ranks() {
        let records: Vec<_> = (0..8).flat_map(|t| vec![rec(t), rec(t)]).collect();
        let parts = partition_time_ordered(&records, 8).unwrap();
        for (r, p) in parts.iter().enumerate() {
            assert_eq!(p.len(), 2);
            assert!(p.iter().all(|x| x.time_index == r as u32));
        }
    }

    #[test]
    fn ten_slices_four_ranks() {
        let records: Vec<_> = (0..10).map(rec).collect();
        let parts = partition_time_ordered(&records, 4).unwrap();
        assert_eq!(slice_counts(&parts), vec![3, 3, 2, 2]);
        let joined: Vec<_> = parts.concat();
        assert_eq!(joined, records);
    }

    #[test]
    fn single_rank_is_identity() {
        let records: Vec<_> = [0, 0, 1, 3, 3, 7].into_iter().map(rec).collect();
        let parts = partition_time_ordered(&records, 1).unwrap();
        assert_eq!(parts, vec![records]);
    }

    #[test]
    fn unsorted_rejected() {
        let records: Vec<_> = [0, 2, 1].into_iter().map(rec).collect();
        assert!(matches!(
            partition_time_ordered(&records, 2),
            Err(VisError::Unsorted(2))
        ));
    }

    #[test]
    fn record_validation() {
        let mut r = rec(0);
        assert!(r.validate(1).is_ok());
        assert!(r.validate(2).is_err());
        r.u = 1.0;
        assert!(r.validate(1).is_err());
        let mut r = rec(0);
        r.w = 1.0;
        assert!(r.validate(1).is_ok());
        r.weight[0] = -1.0;
        assert!(r.validate(1).is_err());
    }
}
