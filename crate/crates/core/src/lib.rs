//! Stabilized single-view video synthesis from a movable multi-camera rig.
//!
//! The pipeline aligns every camera to a reference view with per-segment
//! homographies, detects when the rig moves and recalibrates, picks the
//! least-occluded view per instant, and optionally recenters the field of
//! interest and fills pixels left empty by warping.

pub mod enhance;
pub mod error;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod motion;
pub mod occlusion;
mod parallel;
pub mod pipeline;
pub mod raster;
pub mod selector;
pub mod synthgen;

pub use error::{Error, Result};
