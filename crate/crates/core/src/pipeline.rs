//! The full imaging run: read (optionally in frequency chunks), partition by
//! time, grid and reduce per sector, inverse FFT, w-correct, stack, write.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use thiserror::Error;

use crate::comms::{run_world, MessageLog, ReduceStrategy, Topology};
use crate::gridder::{DistributedGrid, GridError, KernelSpec};
use crate::mesh::{GridSpec, MeshError};
use crate::metrics::Phase;
use crate::scalar::Real;
use crate::split::balanced_range;
use crate::transform::{
    apply_w_correction, assemble_image, image_planes_rank, stack_planes, write_image, write_pgm, FinalImage,
    Provenance, TransformError,
};
use crate::visdata::{partition_time_ordered, read_dataset, ChunkSpec, DatasetHeader, VisError, VisRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Vis(#[from] VisError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    pub n_u: usize,
    pub n_v: usize,
    pub n_w: usize,
    /// Pixel size in direction cosines; `1/uv_extent` of the dataset when unset.
    pub cell_size_lm: Option<f64>,
    pub kernel: KernelSpec,
    pub topo: Topology,
    pub strategy: ReduceStrategy,
    /// Frequency chunks read and gridded one after another.
    pub n_chunks: usize,
}

impl ImagingConfig {
    pub fn new(n_u: usize, n_v: usize, n_w: usize) -> Self {
        Self {
            n_u,
            n_v,
            n_w,
            cell_size_lm: None,
            kernel: KernelSpec::default(),
            topo: Topology::single(),
            strategy: ReduceStrategy::default(),
            n_chunks: 1,
        }
    }

    /// Mesh for a dataset with the given header.
    pub fn grid_spec(&self, header: &DatasetHeader) -> Result<GridSpec> {
        let cell = match self.cell_size_lm {
            Some(c) => c,
            None if header.uv_extent_native > 0.0 => 1.0 / header.uv_extent_native,
            None => return Err(PipelineError::Config("dataset has no uv extent; set the cell size".into())),
        };
        Ok(GridSpec::new(self.n_u, self.n_v, self.n_w, cell)?
            .with_w_range(header.w_min_native, header.w_max_native)?)
    }
}

pub enum Source<'a> {
    File(&'a Path),
    Memory(&'a DatasetHeader, &'a [VisRecord]),
}

/// Where and how to write the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutput {
    pub path: PathBuf,
    pub pgm: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub image: FinalImage,
    /// Wall seconds per phase, merged over ranks.
    pub seconds: BTreeMap<Phase, f64>,
    /// Deterministic work counts per phase for the busiest rank: samples read,
    /// kernel cell updates, reduce bytes sent plus received, butterfly
    /// element passes, corrected pixels, written pixels; `total` is their sum.
    pub ops: BTreeMap<Phase, u64>,
    pub log: MessageLog,
    pub n_records: u64,
    /// Header of the dataset (first chunk when chunked).
    pub header: DatasetHeader,
}

fn max_by<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

/// Runs the whole pipeline with scalar type `T` for grids and transforms.
pub fn run_pipeline<T: Real>(source: Source<'_>, cfg: &ImagingConfig, output: Option<&ImageOutput>) -> Result<PipelineRun> {
    let wall = Instant::now();
    if cfg.n_chunks == 0 {
        return Err(PipelineError::Config("n_chunks must be at least 1".into()));
    }
    cfg.topo.validate().map_err(PipelineError::Config)?;
    let n_ranks = cfg.topo.n_ranks();
    let mut read_secs = 0.0;
    let mut read_ops = 0u64;
    let mut n_records = 0u64;

    let load = |chunk: usize| -> Result<(DatasetHeader, Vec<VisRecord>)> {
        match &source {
            Source::File(p) => Ok(read_dataset(p, ChunkSpec::frequency(chunk, cfg.n_chunks))?),
            Source::Memory(h, r) => Ok((*(*h), r.to_vec())),
        }
    };
    let chunks = match source {
        Source::File(_) => cfg.n_chunks,
        Source::Memory(..) => 1,
    };

    let t = Instant::now();
    let (header, records) = load(0)?;
    let spec = cfg.grid_spec(&header)?;
    let mut per_rank = partition_time_ordered(&records, n_ranks)?;
    read_secs += t.elapsed().as_secs_f64();
    read_ops += (records.len() * header.n_channels()) as u64;
    drop(records);

    let mut grid = DistributedGrid::<T>::new(spec, cfg.kernel, cfg.topo, cfg.strategy)?;
    for chunk in 0..chunks {
        if chunk > 0 {
            let t = Instant::now();
            let (h, records) = load(chunk)?;
            per_rank = partition_time_ordered(&records, n_ranks)?;
            read_secs += t.elapsed().as_secs_f64();
            read_ops += (records.len() * h.n_channels()) as u64;
        }
        let count: u64 = per_rank.iter().map(|r| r.len() as u64).sum();
        grid.add_records(&per_rank, chunk as u64 * header.n_records)?;
        n_records = n_records.max(count);
    }
    drop(per_rank);

    let gridding = max_by(grid.stats.iter().map(|s| s.gridding_secs));
    let grid_reduce = max_by(grid.stats.iter().map(|s| s.gridding_secs + s.reduce_secs));
    let cell_updates = grid.stats.iter().map(|s| s.cell_updates).max().unwrap_or(0);
    let mut log = std::mem::take(&mut grid.log);
    let mut reduce_bytes = vec![0u64; n_ranks];
    for m in &log.messages {
        reduce_bytes[m.src_rank] += m.bytes;
        reduce_bytes[m.dst_rank] += m.bytes;
    }
    let slabs = grid.finish();

    // inverse transform, correction and stacking, one collective
    let cells: Vec<Mutex<Option<_>>> = slabs.into_iter().map(|s| Mutex::new(Some(s))).collect();
    let (outs, fft_log) = run_world(&cfg.topo, |ctx| {
        let mut g = cells[ctx.rank()].lock().unwrap().take().unwrap();
        let t = Instant::now();
        image_planes_rank(ctx, &mut g)?;
        let fft = t.elapsed().as_secs_f64();
        let t = Instant::now();
        for k in 0..spec.n_w {
            apply_w_correction(&mut g, k);
        }
        let stacked = stack_planes(&g);
        Ok::<_, TransformError>((stacked, fft, t.elapsed().as_secs_f64()))
    });
    let outs: Vec<_> = outs.into_iter().collect::<std::result::Result<_, _>>()?;
    log.extend(fft_log);
    let fft = max_by(outs.iter().map(|o| o.1));
    let fft_wc = max_by(outs.iter().map(|o| o.1 + o.2));
    let stacked: Vec<_> = outs.into_iter().map(|o| o.0).collect();
    let image = assemble_image(&spec, &stacked)?;

    let t = Instant::now();
    if let Some(out) = output {
        write_image(&image, &out.provenance, &out.path)?;
        if out.pgm {
            write_pgm(&image, &out.path.with_extension("pgm"))?;
        }
    }
    let write = t.elapsed().as_secs_f64();

    let seconds = BTreeMap::from([
        (Phase::Read, read_secs),
        (Phase::Gridding, gridding),
        (Phase::Reduce, grid_reduce - gridding),
        (Phase::Fft, fft),
        (Phase::Wcorrect, fft_wc - fft),
        (Phase::Write, write),
        (Phase::Total, wall.elapsed().as_secs_f64()),
    ]);
    let ops = op_counts(&spec, n_ranks, read_ops, cell_updates, reduce_bytes.into_iter().max().unwrap_or(0));
    Ok(PipelineRun {
        image,
        seconds,
        ops,
        log,
        n_records,
        header,
    })
}

fn op_counts(spec: &GridSpec, n_ranks: usize, read: u64, grid: u64, reduce: u64) -> BTreeMap<Phase, u64> {
    let rows = balanced_range(spec.n_v, n_ranks, 0).len() as u64;
    let cols = balanced_range(spec.n_u, n_ranks, 0).len() as u64;
    let (n_u, n_v, n_w) = (spec.n_u as u64, spec.n_v as u64, spec.n_w as u64);
    let log2 = |n: u64| n.trailing_zeros() as u64;
    let fft = n_w * (rows * n_u * log2(n_u) + cols * n_v * log2(n_v));
    let wc = n_w * rows * n_u;
    let write = n_u * n_v;
    let mut ops = BTreeMap::from([
        (Phase::Read, read),
        (Phase::Gridding, grid),
        (Phase::Reduce, reduce),
        (Phase::Fft, fft),
        (Phase::Wcorrect, wc),
        (Phase::Write, write),
    ]);
    ops.insert(Phase::Total, ops.values().sum());
    ops
}
