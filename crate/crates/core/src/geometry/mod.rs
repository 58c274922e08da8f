//! Homography estimation, per-segment camera atlases, and warping into the
//! reference view.

mod atlas;
mod homography;
mod warp;

pub use atlas::{build_atlas, AtlasParams, HomographyAtlas, PairStats};
pub use homography::{dlt, estimate_homography, refine, Homography, RansacParams};
pub use warp::{apply_atlas, warp, Canvas, Warped};
