//! Language-conditioned volumetric exploration in a deterministic box world.
//!
//! The pipeline per tick: render depth, integrate it into a [`voxel::VoxelGrid`],
//! embed image patches, grow the object-level [`memory::SemanticMemory`] and
//! the per-cycle [`cache::TemporalCache`], and every few ticks run
//! [`planner::plan_cycle`] to pick the next viewpoint. [`harness`] drives whole
//! missions and turns their logs into metrics.

pub mod cache;
pub mod embedding;
pub mod geometry;
pub mod harness;
pub mod memory;
pub mod planner;
pub mod sim;
pub mod voxel;

pub use geometry::{Aabb, Vec3};
