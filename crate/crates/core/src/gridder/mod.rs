//! Convolutional gridding of visibilities onto the slab-decomposed mesh,
//! sector by sector, followed by the reduce onto each sector's owner.

mod accum;
mod kernel;
mod sector;

use std::time::Instant;

use num_complex::Complex;
use thiserror::Error;

use crate::comms::{bucket_by_sector, reduce_collective, run_world, CommsError, MessageLog, ReduceStrategy, Topology};
use crate::mesh::{slab_of, ComplexGrid, GridSpec, MeshError, SlabRange};
use crate::scalar::Real;
use crate::visdata::VisRecord;

pub use accum::{AtomicComplexSlab, FixedComplex, FixedOverflow, FIXED_FRAC_BITS, FIXED_MAX_ABS};
pub use kernel::{bessel_i0, kernel_value, KernelKind, KernelSpec};
pub use sector::{grid_batch_concurrent, grid_batch_exact, grid_sector, GridPoint, SectorBatch};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("output slab does not match the batch slab")]
    SlabMismatch,
    #[error("point at gv={gv} lies outside sector rows [{v_start}, {v_end}) plus halo")]
    OutsideSector { gv: f64, v_start: usize, v_end: usize },
    #[error(transparent)]
    Overflow(#[from] FixedOverflow),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Comms(#[from] Box<CommsError>),
}

impl From<CommsError> for GridError {
    fn from(e: CommsError) -> Self {
        GridError::Comms(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, GridError>;

/// Per-rank counters from one gridding pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RankGridStats {
    pub gridding_secs: f64,
    pub reduce_secs: f64,
    /// Kernel-weighted cell updates performed by this rank.
    pub cell_updates: u64,
    /// Cells this rank fed into reductions.
    pub reduced_cells: u64,
}

impl RankGridStats {
    fn absorb(&mut self, o: &RankGridStats) {
        self.gridding_secs += o.gridding_secs;
        self.reduce_secs += o.reduce_secs;
        self.cell_updates += o.cell_updates;
        self.reduced_cells += o.reduced_cells;
    }
}

enum SlabAccumulator<T> {
    Exact(Vec<FixedComplex>),
    Float(Vec<Complex<T>>),
}

/// Owned slabs of a distributed mesh, accumulated over successive record
/// chunks. Each chunk is bucketed per sector on every rank, gridded with the
/// rank's threads and reduced onto the sector owner.
pub struct DistributedGrid<T> {
    spec: GridSpec,
    topo: Topology,
    strategy: ReduceStrategy,
    kernel: KernelSpec,
    slabs: Vec<SlabRange>,
    accs: Vec<SlabAccumulator<T>>,
    /// Running totals per rank.
    pub stats: Vec<RankGridStats>,
    pub log: MessageLog,
}

impl<T: Real> DistributedGrid<T> {
    pub fn new(spec: GridSpec, kernel: KernelSpec, topo: Topology, strategy: ReduceStrategy) -> Result<Self> {
        spec.validate()?;
        kernel.validate().map_err(GridError::Kernel)?;
        topo.validate().map_err(CommsError::Topology)?;
        let n = topo.n_ranks();
        let slabs: Vec<SlabRange> = (0..n)
            .map(|r| slab_of(&spec, r, n))
            .collect::<std::result::Result<_, _>>()?;
        let accs = slabs
            .iter()
            .map(|s| {
                let len = spec.n_u * s.v_count * spec.n_w;
                if strategy.deterministic {
                    SlabAccumulator::Exact(vec![FixedComplex::ZERO; len])
                } else {
                    SlabAccumulator::Float(vec![Complex::new(T::zero(), T::zero()); len])
                }
            })
            .collect();
        Ok(Self {
            spec,
            topo,
            strategy,
            kernel,
            slabs,
            accs,
            stats: vec![RankGridStats::default(); n],
            log: MessageLog::default(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Grids one chunk. `per_rank[r]` are rank `r`'s time-ordered records and
    /// `first_order` the global index of `per_rank[0][0]`.
    pub fn add_records(&mut self, per_rank: &[Vec<VisRecord>], first_order: u64) -> Result<()> {
        let n = self.topo.n_ranks();
        if per_rank.len() != n {
            return Err(CommsError::PartialCount {
                expected: n,
                got: per_rank.len(),
            }
            .into());
        }
        let mut offsets = Vec::with_capacity(n);
        let mut next = first_order;
        for recs in per_rank {
            offsets.push(next);
            next += recs.len() as u64;
        }
        let spec = self.spec;
        let kernel = self.kernel;
        let threads = self.topo.threads_per_rank;
        let kind = self.strategy.kind;

        // Ranks keep participating in every collective after a local failure
        // (with zero partials) so peers never block; the error is raised after.
        macro_rules! run_pass {
            ($grid:ident, $zero:expr) => {{
                run_world(&self.topo, |ctx| {
                    let r = ctx.rank();
                    let mut stats = RankGridStats::default();
                    let mut failure: Option<GridError> = None;
                    let t = Instant::now();
                    let batches = match bucket_by_sector::<T>(&per_rank[r], offsets[r], &spec, n, kernel.half_support) {
                        Ok(b) => b,
                        Err(e) => {
                            failure = Some(e.into());
                            self.slabs.iter().map(|s| SectorBatch::new(*s)).collect()
                        }
                    };
                    stats.gridding_secs += t.elapsed().as_secs_f64();
                    let mut owned = None;
                    for (sector, batch) in batches.iter().enumerate() {
                        let t = Instant::now();
                        let len = spec.n_u * batch.slab.v_count * spec.n_w;
                        let partial = if failure.is_some() {
                            vec![$zero; len]
                        } else {
                            match $grid(&spec, batch, &kernel, threads) {
                                Ok((cells, updates)) => {
                                    stats.cell_updates += updates;
                                    cells
                                }
                                Err(e) => {
                                    failure = Some(e);
                                    vec![$zero; len]
                                }
                            }
                        };
                        stats.gridding_secs += t.elapsed().as_secs_f64();
                        stats.reduced_cells += len as u64;
                        let t = Instant::now();
                        let reduced = reduce_collective(ctx, kind, partial, sector);
                        stats.reduce_secs += t.elapsed().as_secs_f64();
                        if sector == r {
                            owned = reduced;
                        }
                    }
                    (owned, stats, failure)
                })
            }};
        }

        let per_rank_out = if self.strategy.deterministic {
            let (outs, log) = run_pass!(grid_batch_exact, FixedComplex::ZERO);
            let mut results = Vec::with_capacity(n);
            for (r, (owned, stats, failure)) in outs.into_iter().enumerate() {
                if let (SlabAccumulator::Exact(acc), Some(cells)) = (&mut self.accs[r], owned) {
                    for (a, c) in acc.iter_mut().zip(cells) {
                        *a = a
                            .checked_add(c)
                            .ok_or(GridError::Overflow(FixedOverflow(f64::INFINITY)))?;
                    }
                }
                results.push((stats, failure));
            }
            self.log.extend(log);
            results
        } else {
            let (outs, log) = run_pass!(grid_batch_concurrent, Complex::new(T::zero(), T::zero()));
            let mut results = Vec::with_capacity(n);
            for (r, (owned, stats, failure)) in outs.into_iter().enumerate() {
                if let (SlabAccumulator::Float(acc), Some(cells)) = (&mut self.accs[r], owned) {
                    for (a, c) in acc.iter_mut().zip(cells) {
                        *a += c;
                    }
                }
                results.push((stats, failure));
            }
            self.log.extend(log);
            results
        };
        for (r, (stats, failure)) in per_rank_out.into_iter().enumerate() {
            self.stats[r].absorb(&stats);
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Ok(())
    }

    /// Converts the accumulated sums into one owned slab per rank.
    pub fn finish(self) -> Vec<ComplexGrid<T>> {
        let spec = self.spec;
        self.slabs
            .into_iter()
            .zip(self.accs)
            .map(|(slab, acc)| ComplexGrid {
                spec,
                slab,
                data: match acc {
                    SlabAccumulator::Exact(cells) => cells.into_iter().map(FixedComplex::to_complex).collect(),
                    SlabAccumulator::Float(cells) => cells,
                },
            })
            .collect()
    }
}

/// Result of [`grid_all`]: one reduced slab per rank plus accounting.
pub struct GridRun<T> {
    pub slabs: Vec<ComplexGrid<T>>,
    pub stats: Vec<RankGridStats>,
    pub log: MessageLog,
}

/// Grids every rank's records and reduces each sector onto its owner.
pub fn grid_all<T: Real>(
    per_rank: &[Vec<VisRecord>],
    spec: &GridSpec,
    kernel: &KernelSpec,
    topo: &Topology,
    strategy: &ReduceStrategy,
) -> Result<GridRun<T>> {
    let mut grid = DistributedGrid::new(*spec, *kernel, *topo, *strategy)?;
    grid.add_records(per_rank, 0)?;
    let stats = std::mem::take(&mut grid.stats);
    let log = std::mem::take(&mut grid.log);
    Ok(GridRun {
        slabs: grid.finish(),
        stats,
        log,
    })
}

/// Concatenates per-rank slabs (in rank order) into a full-mesh grid.
pub fn gather_slabs<T: Real>(slabs: &[ComplexGrid<T>]) -> ComplexGrid<T> {
    let spec = slabs[0].spec;
    let mut full = ComplexGrid::zeros(spec, SlabRange::full(&spec));
    for s in slabs {
        for k in 0..spec.n_w {
            for j in 0..s.slab.v_count {
                let src = s.index(k, j, 0);
                let dst = full.index(k, s.slab.v_start + j, 0);
                full.data[dst..dst + spec.n_u].copy_from_slice(&s.data[src..src + spec.n_u]);
            }
        }
    }
    full
}
