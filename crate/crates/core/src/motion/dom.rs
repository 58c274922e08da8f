use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::features::{match_stack, FeatureConfig, MatchSet};
use crate::geometry::{estimate_homography, HomographyAtlas, RansacParams};

/// Mean transfer error of `matches` under `atlas`, summed over ordered
/// camera pairs: every stored correspondence contributes its error in both
/// directions. `None` when there are no correspondences.
pub fn degree_of_misalignment(matches: &MatchSet, atlas: &HomographyAtlas) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&(a, b), list) in matches.iter() {
        if list.is_empty() {
            continue;
        }
        let forward = atlas.between(a, b);
        let backward = atlas.between(b, a);
        for c in list {
            sum += forward.transfer_error(c);
            sum += backward.transfer_error(&c.flipped());
        }
        count += 2 * list.len();
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomParams {
    pub features: FeatureConfig,
    /// Consensus filter applied to each pair's fresh matches before scoring.
    pub ransac: RansacParams,
}

impl Default for DomParams {
    fn default() -> Self {
        DomParams {
            features: FeatureConfig::default(),
            ransac: RansacParams {
                refine: false,
                ..RansacParams::default()
            },
        }
    }
}

/// Keeps, per camera pair, the matches consistent with a homography fitted
/// to that pair alone. Pairs without a consensus are dropped.
pub fn consensus_matches(matches: &MatchSet, ransac: &RansacParams, seed: u64) -> MatchSet {
    let mut out = MatchSet::new(matches.camera_count());
    for (&(a, b), list) in matches.iter() {
        let pair_seed = seed ^ ((a as u64) << 8 | b as u64);
        if let Ok((_, mask)) = estimate_homography(list, ransac, pair_seed) {
            for (c, keep) in list.iter().zip(mask) {
                if keep {
                    out.push(a, b, *c);
                }
            }
        }
    }
    out
}

/// Degree of misalignment of one frame stack's fresh matches.
pub fn dom_at(images: &[RgbImage], atlas: &HomographyAtlas, params: &DomParams, seed: u64) -> Option<f64> {
    let fresh = match_stack(images, &params.features);
    degree_of_misalignment(&consensus_matches(&fresh, &params.ransac, seed), atlas)
}
