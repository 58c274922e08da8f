use std::path::Path;

use serde::{Deserialize, Serialize};

use super::homography::{estimate_homography, Homography, RansacParams};
use crate::error::{Error, Result};
use crate::features::MatchSet;

/// Inlier statistics of one estimated camera-pair homography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub from: String,
    pub to: String,
    pub inliers: usize,
    pub total: usize,
    /// Mean transfer error over the inliers, in pixels.
    pub mean_error: f64,
}

/// Per-camera homographies into the reference view, valid for one segment
/// of the video.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographyAtlas {
    pub segment_id: usize,
    pub reference: usize,
    pub camera_ids: Vec<String>,
    pub to_reference: Vec<Homography>,
    pub stats: Vec<PairStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasParams {
    pub ransac: RansacParams,
    /// Minimum inliers for a pair estimate to be trusted.
    pub min_inliers: usize,
}

impl Default for AtlasParams {
    fn default() -> Self {
        AtlasParams {
            ransac: RansacParams::default(),
            min_inliers: 12,
        }
    }
}

impl HomographyAtlas {
    pub fn identity(camera_ids: Vec<String>, reference: usize, segment_id: usize) -> Self {
        HomographyAtlas {
            segment_id,
            reference,
            to_reference: vec![Homography::identity(); camera_ids.len()],
            camera_ids,
            stats: Vec::new(),
        }
    }

    pub fn camera_count(&self) -> usize {
        self.to_reference.len()
    }

    /// Maps points of camera `from` into camera `to`.
    pub fn between(&self, from: usize, to: usize) -> Homography {
        self.to_reference[to].inverse().compose(&self.to_reference[from])
    }

    pub fn to_json(&self) -> String {
        let file = AtlasFile {
            segment_id: self.segment_id,
            reference: self.camera_ids[self.reference].clone(),
            cameras: self
                .camera_ids
                .iter()
                .zip(&self.to_reference)
                .map(|(id, h)| CameraEntry {
                    id: id.clone(),
                    to_reference: h.to_row_array(),
                })
                .collect(),
            stats: self.stats.clone(),
        };
        serde_json::to_string_pretty(&file).expect("atlas serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AtlasFile = serde_json::from_str(text).map_err(|e| Error::parse("atlas", e))?;
        let camera_ids: Vec<String> = file.cameras.iter().map(|c| c.id.clone()).collect();
        let reference = camera_ids
            .iter()
            .position(|id| *id == file.reference)
            .ok_or_else(|| Error::UnknownReference(file.reference.clone()))?;
        let to_reference = file
            .cameras
            .iter()
            .map(|c| Homography::from_row_slice(&c.to_reference))
            .collect::<Result<Vec<_>>>()?;
        Ok(HomographyAtlas {
            segment_id: file.segment_id,
            reference,
            camera_ids,
            to_reference,
            stats: file.stats,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct CameraEntry {
    id: String,
    /// Row-major 3x3 matrix.
    to_reference: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct AtlasFile {
    segment_id: usize,
    reference: String,
    cameras: Vec<CameraEntry>,
    #[serde(default)]
    stats: Vec<PairStats>,
}

struct PairFit {
    h: Homography,
    inliers: usize,
    total: usize,
    mean_error: f64,
}

fn fit_pair(matches: &MatchSet, from: usize, to: usize, params: &AtlasParams, seed: u64) -> Option<PairFit> {
    let corrs = matches.pair(from, to);
    if corrs.len() < params.min_inliers.max(4) {
        return None;
    }
    let pair_seed = seed ^ ((from as u64) << 32 | to as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let (h, mask) = estimate_homography(&corrs, &params.ransac, pair_seed).ok()?;
    let inliers = mask.iter().filter(|&&m| m).count();
    if inliers < params.min_inliers {
        return None;
    }
    let mean_error = corrs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| h.transfer_error(c))
        .sum::<f64>()
        / inliers as f64;
    Some(PairFit {
        h,
        inliers,
        total: corrs.len(),
        mean_error,
    })
}

/// Estimates every camera's homography into `reference`. Cameras without a
/// usable direct estimate are chained through the intermediate camera whose
/// weaker hop has the most inliers.
pub fn build_atlas(
    matches: &MatchSet,
    reference: usize,
    camera_ids: &[String],
    params: &AtlasParams,
    segment_id: usize,
    seed: u64,
) -> Result<HomographyAtlas> {
    let n = matches.camera_count();
    if n != camera_ids.len() || reference >= n {
        return Err(Error::InvalidParameter(format!(
            "{} cameras in match set, {} ids, reference {reference}",
            n,
            camera_ids.len()
        )));
    }
    let mut atlas = HomographyAtlas::identity(camera_ids.to_vec(), reference, segment_id);
    let record = |stats: &mut Vec<PairStats>, from: usize, to: usize, f: &PairFit| {
        stats.push(PairStats {
            from: camera_ids[from].clone(),
            to: camera_ids[to].clone(),
            inliers: f.inliers,
            total: f.total,
            mean_error: f.mean_error,
        })
    };
    for c in (0..n).filter(|&c| c != reference) {
        if let Some(fit) = fit_pair(matches, c, reference, params, seed) {
            atlas.to_reference[c] = fit.h;
            record(&mut atlas.stats, c, reference, &fit);
            continue;
        }
        let mut best: Option<(usize, PairFit, PairFit)> = None;
        for k in (0..n).filter(|&k| k != c && k != reference) {
            let Some(first) = fit_pair(matches, c, k, params, seed) else { continue };
            let Some(second) = fit_pair(matches, k, reference, params, seed) else { continue };
            let strength = first.inliers.min(second.inliers);
            if best
                .as_ref()
                .is_none_or(|(_, f, s)| strength > f.inliers.min(s.inliers))
            {
                best = Some((k, first, second));
            }
        }
        let Some((k, first, second)) = best else {
            return Err(Error::CalibrationFailed(camera_ids[c].clone()));
        };
        atlas.to_reference[c] = second.h.compose(&first.h);
        record(&mut atlas.stats, c, k, &first);
        record(&mut atlas.stats, k, reference, &second);
    }
    Ok(atlas)
}
