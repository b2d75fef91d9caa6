//! Reduction of per-rank partial slabs onto the sector owner.
//!
//! * `direct`: every rank sends its whole partial to the target, which sums
//!   in rank order.
//! * `hybrid_ring`: ring reduce-scatter inside each node, node master gathers
//!   the node partial, masters reduce to the target's node master, which
//!   hands the result to the target.
//! * `ring_rdma_like`: ring reduce-scatter inside each node, then every
//!   segment travels a ring over the nodes between same-local-index ranks,
//!   and the target gathers the segments from its node neighbours. Node
//!   masters are not on the inter-node path.

use std::ops::Add;

use num_complex::Complex;

use super::world::{run_world, MessageLog, Rank};
use super::{CommsError, Result, Topology};
use crate::gridder::FixedComplex;
use crate::mesh::ComplexGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceKind {
    Direct,
    HybridRing,
    RingRdmaLike,
}

impl ReduceKind {
    pub const ALL: [ReduceKind; 3] = [ReduceKind::Direct, ReduceKind::HybridRing, ReduceKind::RingRdmaLike];

    pub fn name(self) -> &'static str {
        match self {
            ReduceKind::Direct => "direct",
            ReduceKind::HybridRing => "hybrid_ring",
            ReduceKind::RingRdmaLike => "ring_rdma_like",
        }
    }
}

impl std::fmt::Display for ReduceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ReduceKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "direct" => Ok(ReduceKind::Direct),
            "hybrid_ring" => Ok(ReduceKind::HybridRing),
            "ring_rdma_like" => Ok(ReduceKind::RingRdmaLike),
            other => Err(format!(
                "unknown reduce kind {other:?} (direct | hybrid_ring | ring_rdma_like)"
            )),
        }
    }
}

/// Reduction protocol plus accumulation mode. In deterministic mode partial
/// sums travel as exact fixed-point values, so every strategy, rank count
/// and arrival order produces bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReduceStrategy {
    pub kind: ReduceKind,
    pub deterministic: bool,
}

impl ReduceStrategy {
    pub fn new(kind: ReduceKind, deterministic: bool) -> Self {
        Self { kind, deterministic }
    }
}

impl Default for ReduceStrategy {
    fn default() -> Self {
        Self::new(ReduceKind::HybridRing, true)
    }
}

/// Element type that can travel through a reduction.
pub trait ReduceElem: Copy + Send + Sync + 'static + Add<Output = Self> {
    fn zero() -> Self;
}

impl<T: Real> ReduceElem for Complex<T> {
    fn zero() -> Self {
        Complex::new(T::zero(), T::zero())
    }
}

impl ReduceElem for FixedComplex {
    fn zero() -> Self {
        FixedComplex::ZERO
    }
}

const STEP_GATHER: u32 = 1 << 16;
const STEP_INTER: u32 = 2 << 16;
const STEP_DELIVER: u32 = 3 << 16;

fn add_into<E: ReduceElem>(acc: &mut [E], other: &[E]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a = *a + *b;
    }
}

fn padded_segment<E: ReduceElem>(data: &[E], q: usize, seg_len: usize) -> Vec<E> {
    let lo = (q * seg_len).min(data.len());
    let hi = ((q + 1) * seg_len).min(data.len());
    let mut seg = data[lo..hi].to_vec();
    seg.resize(seg_len, E::zero());
    seg
}

/// Ring reduce-scatter over `group` (global ranks, ring order). The caller
/// must be a member. At step `s` group member `i` sends segment
/// `(i - s - 1) mod P` to member `i + 1` and adds the incoming segment
/// `(i - s - 2) mod P` to its own copy; after `P - 1` steps member `i` holds
/// the full sum of segment `i`. Segments are `ceil(len / P)` long, the last
/// zero-padded; the returned segment keeps its padding.
pub fn ring_reduce_scatter<E: ReduceElem>(
    ctx: &mut Rank,
    group: &[usize],
    data: &[E],
    phase: &'static str,
) -> Vec<E> {
    let p = group.len();
    let me = group
        .iter()
        .position(|r| *r == ctx.rank())
        .expect("rank is not a member of the ring group");
    let seg_len = data.len().div_ceil(p).max(1);
    let mut segs: Vec<Vec<E>> = (0..p).map(|q| padded_segment(data, q, seg_len)).collect();
    let next = group[(me + 1) % p];
    let prev = group[(me + p - 1) % p];
    for s in 0..p.saturating_sub(1) {
        let send_q = (me + 2 * p - s - 1) % p;
        let recv_q = (me + 2 * p - s - 2) % p;
        let outgoing = std::mem::take(&mut segs[send_q]);
        ctx.send(next, phase, s as u32, outgoing);
        let incoming: Vec<E> = ctx.recv(prev, s as u32);
        add_into(&mut segs[recv_q], &incoming);
    }
    std::mem::take(&mut segs[me])
}

fn assemble<E: ReduceElem>(segments: Vec<Vec<E>>, len: usize) -> Vec<E> {
    let mut out: Vec<E> = segments.into_iter().flatten().collect();
    out.truncate(len);
    out
}

fn reduce_direct<E: ReduceElem>(ctx: &mut Rank, data: Vec<E>, target: usize) -> Option<Vec<E>> {
    let me = ctx.rank();
    if me != target {
        ctx.send(target, "direct", 0, data);
        return None;
    }
    let mut own = Some(data);
    let mut acc: Option<Vec<E>> = None;
    for r in 0..ctx.n_ranks() {
        let part = if r == me {
            own.take().unwrap()
        } else {
            ctx.recv::<E>(r, 0)
        };
        match acc.as_mut() {
            None => acc = Some(part),
            Some(a) => add_into(a, &part),
        }
    }
    acc
}

fn node_group(topo: &Topology, node: usize) -> Vec<usize> {
    (0..topo.ranks_per_node).map(|q| topo.rank_at(node, q)).collect()
}

fn reduce_hybrid<E: ReduceElem>(ctx: &mut Rank, data: Vec<E>, target: usize) -> Option<Vec<E>> {
    let topo = *ctx.topology();
    let me = ctx.rank();
    let len = data.len();
    let node = topo.node_of(me);
    let group = node_group(&topo, node);
    let master = topo.master_of(node);

    let seg = ring_reduce_scatter(ctx, &group, &data, "intra_ring");
    drop(data);

    // node master gathers the node partial
    let node_partial = if me != master {
        ctx.send(master, "intra_gather", STEP_GATHER, seg);
        None
    } else {
        let mut segments = vec![seg];
        for &r in &group[1..] {
            segments.push(ctx.recv::<E>(r, STEP_GATHER));
        }
        Some(assemble(segments, len))
    };

    // masters reduce across nodes onto the target node's master
    let target_node = topo.node_of(target);
    let target_master = topo.master_of(target_node);
    let mut result = None;
    if let Some(partial) = node_partial {
        if me != target_master {
            ctx.send(target_master, "inter_reduce", STEP_INTER, partial);
        } else {
            let mut own = Some(partial);
            let mut acc: Option<Vec<E>> = None;
            for n in 0..topo.n_nodes {
                let part = if n == target_node {
                    own.take().unwrap()
                } else {
                    ctx.recv::<E>(topo.master_of(n), STEP_INTER)
                };
                match acc.as_mut() {
                    None => acc = Some(part),
                    Some(a) => add_into(a, &part),
                }
            }
            result = acc;
        }
    }

    if target != target_master {
        if me == target_master {
            ctx.send(target, "deliver", STEP_DELIVER, result.take().unwrap());
        } else if me == target {
            result = Some(ctx.recv::<E>(target_master, STEP_DELIVER));
        }
    }
    result
}

fn reduce_rdma_like<E: ReduceElem>(ctx: &mut Rank, data: Vec<E>, target: usize) -> Option<Vec<E>> {
    let topo = *ctx.topology();
    let me = ctx.rank();
    let len = data.len();
    let node = topo.node_of(me);
    let local = topo.local_rank(me);
    let group = node_group(&topo, node);

    let mut seg = ring_reduce_scatter(ctx, &group, &data, "intra_ring");
    drop(data);

    // ring over nodes for this segment, ending at the target's node
    let n = topo.n_nodes;
    let target_node = topo.node_of(target);
    let pos = (node + n - target_node + n - 1) % n; // 0 = first sender, n-1 = target node
    if pos > 0 {
        let prev = topo.rank_at((node + n - 1) % n, local);
        let incoming: Vec<E> = ctx.recv(prev, STEP_INTER + pos as u32 - 1);
        add_into(&mut seg, &incoming);
    }
    if pos + 1 < n {
        let next = topo.rank_at((node + 1) % n, local);
        ctx.send(next, "inter_ring", STEP_INTER + pos as u32, seg);
        return None;
    }

    // target node: the target gathers every segment
    if me != target {
        ctx.send(target, "gather", STEP_DELIVER, seg);
        return None;
    }
    let mut own = Some(seg);
    let segments = (0..topo.ranks_per_node)
        .map(|q| {
            let r = topo.rank_at(target_node, q);
            if r == me {
                own.take().unwrap()
            } else {
                ctx.recv::<E>(r, STEP_DELIVER)
            }
        })
        .collect();
    Some(assemble(segments, len))
}

/// Collective entry point: every rank passes its partial (same length),
/// the target gets `Some(sum)`, everyone else `None`.
pub fn reduce_collective<E: ReduceElem>(
    ctx: &mut Rank,
    kind: ReduceKind,
    data: Vec<E>,
    target: usize,
) -> Option<Vec<E>> {
    ctx.begin_collective();
    match kind {
        ReduceKind::Direct => reduce_direct(ctx, data, target),
        ReduceKind::HybridRing => reduce_hybrid(ctx, data, target),
        ReduceKind::RingRdmaLike => reduce_rdma_like(ctx, data, target),
    }
}

/// Runs a stand-alone ring reduce-scatter over `arrays.len()` ranks on a
/// single virtual node. Returns each rank's summed segment (padding removed)
/// and the message log.
pub fn ring_pass<E: ReduceElem>(arrays: Vec<Vec<E>>) -> Result<(Vec<Vec<E>>, MessageLog)> {
    let p = arrays.len();
    if p == 0 {
        return Err(CommsError::PartialCount { expected: 1, got: 0 });
    }
    let len = arrays[0].len();
    if arrays.iter().any(|a| a.len() != len) {
        return Err(CommsError::SlabMismatch);
    }
    let topo = Topology::new(1, p, 1).map_err(CommsError::Topology)?;
    let group: Vec<usize> = (0..p).collect();
    let seg_len = len.div_ceil(p).max(1);
    let (mut segs, log) = run_world(&topo, |ctx| {
        ctx.begin_collective();
        ring_reduce_scatter(ctx, &group, &arrays[ctx.rank()], "intra_ring")
    });
    for (q, seg) in segs.iter_mut().enumerate() {
        let real = len.saturating_sub(q * seg_len).min(seg_len);
        seg.truncate(real);
    }
    Ok((segs, log))
}

/// Sums per-rank partial slabs onto `target`. Rank `r` contributes
/// `partials[r]`; all partials must share spec and slab.
pub fn reduce_slabs<T: Real>(
    strategy: &ReduceStrategy,
    partials: &[ComplexGrid<T>],
    target: usize,
    topo: &Topology,
) -> Result<(ComplexGrid<T>, MessageLog)> {
    topo.validate().map_err(CommsError::Topology)?;
    let n = topo.n_ranks();
    if partials.len() != n {
        return Err(CommsError::PartialCount {
            expected: n,
            got: partials.len(),
        });
    }
    if target >= n {
        return Err(CommsError::Topology(format!("target rank {target} >= {n} ranks")));
    }
    let first = &partials[0];
    if partials
        .iter()
        .any(|p| p.spec != first.spec || p.slab != first.slab || p.data.len() != first.data.len())
    {
        return Err(CommsError::SlabMismatch);
    }

    let (data, log) = if strategy.deterministic {
        let fixed: Vec<Vec<FixedComplex>> = partials
            .iter()
            .map(|p| p.data.iter().map(|c| FixedComplex::from_complex(*c)).collect())
            .collect::<std::result::Result<_, _>>()?;
        let (mut out, log) = run_world(topo, |ctx| {
            reduce_collective(ctx, strategy.kind, fixed[ctx.rank()].clone(), target)
        });
        let summed = out[target].take().expect("target holds the reduction");
        (summed.into_iter().map(FixedComplex::to_complex).collect(), log)
    } else {
        let (mut out, log) = run_world(topo, |ctx| {
            reduce_collective(ctx, strategy.kind, partials[ctx.rank()].data.clone(), target)
        });
        (out[target].take().expect("target holds the reduction"), log)
    };
    Ok((
        ComplexGrid {
            spec: first.spec,
            slab: first.slab,
            data,
        },
        log,
    ))
}
