//! Desk-scale w-stacking imaging pipeline (ingest, grid, reduce, FFT,
//! w-correct, stack, write) with pluggable reduction strategies and a
//! green-productivity report engine driven by measured or injected traces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod scalar;
mod split;
pub mod visdata;
pub mod mesh;

pub use scalar::Real;
pub mod gridder;
pub mod comms;
pub mod transform;
pub mod metrics;
pub mod pipeline;
pub mod bench;

pub type Grid64 = mesh::ComplexGrid<f64>;
pub type Grid32 = mesh::ComplexGrid<f32>;
pub type GridPoint64 = gridder::GridPoint<f64>;
pub type GridPoint32 = gridder::GridPoint<f32>;
pub type GridRun64 = gridder::GridRun<f64>;
pub type GridRun32 = gridder::GridRun<f32>;
pub type DistributedGrid64 = gridder::DistributedGrid<f64>;
pub type DistributedGrid32 = gridder::DistributedGrid<f32>;
pub type Fft64 = transform::Fft<f64>;
pub type Fft32 = transform::Fft<f32>;
pub type StackedSlab64 = transform::StackedSlab<f64>;
pub type StackedSlab32 = transform::StackedSlab<f32>;
