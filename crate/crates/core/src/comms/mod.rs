//! Virtual node/rank topology over in-process workers, time-to-space
//! redistribution, and the reduction strategies.

mod exchange;
mod reduce;
mod topology;
mod world;

use thiserror::Error;

pub use exchange::{bucket_by_sector, exchange_to_space_order};
pub use reduce::{
    reduce_collective, reduce_slabs, ring_pass, ring_reduce_scatter, ReduceElem, ReduceKind,
    ReduceStrategy,
};
pub use topology::Topology;
pub use world::{run_world, Message, MessageLog, Rank};

#[derive(Debug, Error)]
pub enum CommsError {
    #[error("partial slabs do not share spec and slab range")]
    SlabMismatch,
    #[error("expected {expected} per-rank inputs, got {got}")]
    PartialCount { expected: usize, got: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("record {order}: {reason}")]
    Record { order: u64, reason: String },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Overflow(#[from] crate::gridder::FixedOverflow),
}

pub type Result<T> = std::result::Result<T, CommsError>;
