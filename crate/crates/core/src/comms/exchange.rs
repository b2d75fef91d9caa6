//! Time-order to space-order redistribution: each rank sorts its records
//! into one batch per sector (the sector's owner being the reduce target),
//! duplicating points whose kernel footprint crosses a slab boundary.

use crate::gridder::{GridPoint, SectorBatch};
use crate::mesh::{owner_rank, slab_of, GridSpec};
use crate::scalar::Real;
use crate::visdata::VisRecord;

use super::{CommsError, Result, Topology};

/// Buckets one rank's records. `first_order` is the global index of
/// `records[0]` in the time-ordered input.
pub fn bucket_by_sector<T: Real>(
    records: &[VisRecord],
    first_order: u64,
    spec: &GridSpec,
    n_ranks: usize,
    half_support: usize,
) -> Result<Vec<SectorBatch<T>>> {
    let mut batches: Vec<SectorBatch<T>> = (0..n_ranks)
        .map(|r| slab_of(spec, r, n_ranks).map(SectorBatch::new))
        .collect::<std::result::Result<_, _>>()?;
    let half = half_support as f64;
    for (i, rec) in records.iter().enumerate() {
        let order = first_order + i as u64;
        let point = GridPoint::<T>::from_record(spec, rec, order).map_err(|e| CommsError::Record {
            order,
            reason: e.to_string(),
        })?;
        let owner = owner_rank(spec, point.gv, n_ranks);
        let row_lo = (point.gv - half).ceil().max(0.0) as usize;
        let row_hi = ((point.gv + half).floor() as usize).min(spec.n_v - 1);
        let first = owner_rank(spec, row_lo as f64, n_ranks);
        let last = owner_rank(spec, row_hi as f64, n_ranks);
        for (sector, batch) in batches.iter_mut().enumerate().take(last + 1).skip(first) {
            batch.points.push(GridPoint {
                halo: sector != owner,
                ..point
            });
        }
    }
    for b in &mut batches {
        b.points.sort_by_key(|p| (p.time_index, p.order));
    }
    Ok(batches)
}

/// Space-ordered view of every rank's records: `result[rank][sector]`.
pub fn exchange_to_space_order<T: Real>(
    per_rank: &[Vec<VisRecord>],
    spec: &GridSpec,
    topo: &Topology,
    half_support: usize,
) -> Result<Vec<Vec<SectorBatch<T>>>> {
    let n = topo.n_ranks();
    if per_rank.len() != n {
        return Err(CommsError::PartialCount {
            expected: n,
            got: per_rank.len(),
        });
    }
    let mut offset = 0u64;
    per_rank
        .iter()
        .map(|records| {
            let out = bucket_by_sector(records, offset, spec, n, half_support);
            offset += records.len() as u64;
            out
        })
        .collect()
}
