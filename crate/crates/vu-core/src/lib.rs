//! Library for generating virtual unfolded (VU) views of hollow organs from
//! labeled voxel volumes.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`phantom`] / [`volume`] — voxel data model, GVOL I/O, test phantoms.
//! 2. [`preprocess`] — air region, wall region, centerline, incision line.
//! 3. [`wall_model`] — hexahedral mass-spring-damper model of the wall.
//! 4. [`unfold_geometry`] — unfolded plane, stomach radii, base line, and
//!    destination points for the cut edge.
//! 5. [`dynamics`] — Newmark-beta deformation with automatic termination.
//! 6. [`unfolded_view`] — unfolded volume resampling and rendering.
//!
//! Everything is deterministic: identical inputs yield bit-identical outputs.

/// World-space vector/point in millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;

pub mod dynamics;
pub mod phantom;
pub mod preprocess;
pub mod unfold_geometry;
pub mod unfolded_view;
pub mod volume;
pub mod wall_model;
