//! Keypoint detection, descriptor matching, and multi-frame accumulation of
//! cross-camera correspondences.

mod detect;
mod matching;

pub use detect::{detect, detect_gray, harris_response, Descriptor, Keypoint, DESCRIPTOR_BITS};
pub use matching::{match_keypoints, MatchParams};

use std::collections::{BTreeMap, HashSet};
use std::ops::RangeInclusive;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{frame_stack, FrameSource};

/// One point correspondence `a <-> b` between two cameras, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl Correspondence {
    pub fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        Correspondence { a, b }
    }

    pub fn flipped(&self) -> Self {
        Correspondence { a: self.b, b: self.a }
    }
}

/// Correspondences between camera pairs pooled over a frame window. Pairs
/// are stored once per unordered pair, keyed `(low, high)` camera index,
/// with `a` points in the low camera.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    camera_count: usize,
    pairs: BTreeMap<(usize, usize), Vec<Correspondence>>,
    window: Option<(usize, usize)>,
}

impl MatchSet {
    pub fn new(camera_count: usize) -> Self {
        MatchSet {
            camera_count,
            pairs: BTreeMap::new(),
            window: None,
        }
    }

    pub fn camera_count(&self) -> usize {
        self.camera_count
    }

    /// Frame range (inclusive, 1-based) the matches were collected over.
    pub fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    pub fn set_window(&mut self, first: usize, last: usize) {
        self.window = Some((first, last));
    }

    /// Adds a correspondence with `c.a` in camera `from` and `c.b` in camera `to`.
    pub fn push(&mut self, from: usize, to: usize, c: Correspondence) {
        assert!(from != to && from < self.camera_count && to < self.camera_count);
        if from < to {
            self.pairs.entry((from, to)).or_default().push(c);
        } else {
            self.pairs.entry((to, from)).or_default().push(c.flipped());
        }
    }

    /// Correspondences oriented from camera `from` to camera `to`.
    pub fn pair(&self, from: usize, to: usize) -> Vec<Correspondence> {
        if from < to {
            self.pairs.get(&(from, to)).cloned().unwrap_or_default()
        } else {
            self.pairs
                .get(&(to, from))
                .map(|v| v.iter().map(Correspondence::flipped).collect())
                .unwrap_or_default()
        }
    }

    /// `N_pts^{c,c'}`.
    pub fn count(&self, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        self.pairs.get(&key).map_or(0, Vec::len)
    }

    /// `N_pts`, the total over all pairs.
    pub fn total(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    /// Stored pairs as `((low, high), correspondences low -> high)`.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<Correspondence>)> {
        self.pairs.iter()
    }

    /// Keeps only pairs that touch neither camera in `cameras`.
    pub fn without_cameras(&self, cameras: &[usize]) -> MatchSet {
        MatchSet {
            camera_count: self.camera_count,
            pairs: self
                .pairs
                .iter()
                .filter(|((a, b), _)| !cameras.contains(a) && !cameras.contains(b))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_points: usize,
    pub ratio: f32,
    pub mutual: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_points: 1000,
            ratio: 0.8,
            mutual: true,
        }
    }
}

impl FeatureConfig {
    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            ratio: self.ratio,
            mutual: self.mutual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccumulateConfig {
    /// Window length in frames.
    pub window: usize,
    pub stride: usize,
    /// Side of the spatial deduplication bins, in pixels.
    pub dedup_bin: f64,
    pub min_matches: usize,
}

impl Default for AccumulateConfig {
    fn default() -> Self {
        AccumulateConfig {
            window: 30,
            stride: 5,
            dedup_bin: 4.0,
            min_matches: 12,
        }
    }
}

/// Matches every camera pair in a single frame stack.
pub fn match_stack(images: &[image::RgbImage], features: &FeatureConfig) -> MatchSet {
    let keypoints: Vec<Vec<Keypoint>> = images
        .iter()
        .map(|img| detect(img, features.max_points))
        .collect();
    match_keypoint_sets(&keypoints, features)
}

pub fn match_keypoint_sets(keypoints: &[Vec<Keypoint>], features: &FeatureConfig) -> MatchSet {
    let params = features.match_params();
    let mut set = MatchSet::new(keypoints.len());
    for a in 0..keypoints.len() {
        for b in a + 1..keypoints.len() {
            for (i, j) in match_keypoints(&keypoints[a], &keypoints[b], &params) {
                let (ka, kb) = (&keypoints[a][i], &keypoints[b][j]);
                set.push(
                    a,
                    b,
                    Correspondence::new(
                        Point2::new(ka.x as f64, ka.y as f64),
                        Point2::new(kb.x as f64, kb.y as f64),
                    ),
                );
            }
        }
    }
    set
}

fn bin_key(c: &Correspondence, bin: f64) -> [i64; 4] {
    [
        (c.a.x / bin).floor() as i64,
        (c.a.y / bin).floor() as i64,
        (c.b.x / bin).floor() as i64,
        (c.b.y / bin).floor() as i64,
    ]
}

/// Pools the matches of frames sampled every `stride` frames across `window`.
/// A correspondence is dropped when an earlier frame already contributed one
/// to the same spatial bin in both views.
pub fn accumulate_matches<S: FrameSource + ?Sized>(
    source: &S,
    window: RangeInclusive<usize>,
    config: &AccumulateConfig,
    features: &FeatureConfig,
) -> Result<MatchSet> {
    if config.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let (first, last) = (*window.start(), (*window.end()).min(source.frame_count()));
    if first == 0 || first > last {
        return Err(Error::FrameOutOfRange {
            index: first,
            count: source.frame_count(),
        });
    }
    let frames: Vec<usize> = (first..=last).step_by(config.stride).collect();
    let per_frame = crate::parallel::map(frames, |t| {
        frame_stack(source, t).map(|stack| match_stack(&stack.images, features))
    });

    let mut merged = MatchSet::new(source.camera_count());
    merged.set_window(first, last);
    let mut seen: HashSet<(usize, usize, [i64; 4])> = HashSet::new();
    for frame_set in per_frame {
        let frame_set = frame_set?;
        let mut fresh = Vec::new();
        for (&(a, b), list) in frame_set.iter() {
            for c in list {
                let key = (a, b, bin_key(c, config.dedup_bin));
                if !seen.contains(&key) {
                    fresh.push(key);
                    merged.push(a, b, *c);
                }
            }
        }
        seen.extend(fresh);
    }
    check_chain(&merged, source.reference_index(), config.min_matches, source.camera_ids())?;
    Ok(merged)
}

/// Every camera must reach the reference directly or through one
/// intermediate camera with at least `min_matches` correspondences per hop.
pub fn check_chain(set: &MatchSet, reference: usize, min_matches: usize, ids: &[String]) -> Result<()> {
    let n = set.camera_count();
    for c in (0..n).filter(|&c| c != reference) {
        let direct = set.count(c, reference);
        if direct >= min_matches {
            continue;
        }
        let via = (0..n)
            .filter(|&k| k != c && k != reference)
            .any(|k| set.count(c, k) >= min_matches && set.count(k, reference) >= min_matches);
        if !via {
            let name = |i: usize| ids.get(i).cloned().unwrap_or_else(|| i.to_string());
            return Err(Error::InsufficientCorrespondences {
                a: name(c),
                b: name(reference),
                found: direct,
                required: min_matches,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests_support {
    use image::{Rgb, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random overlapping rectangles; corners have asymmetric surroundings.
    pub fn blocks(size: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = RgbImage::from_pixel(size, size, Rgb([90, 90, 90]));
        for _ in 0..60 {
            let x0 = rng.random_range(0..size - 8);
            let y0 = rng.random_range(0..size - 8);
            let w = rng.random_range(6..size / 4);
            let h = rng.random_range(6..size / 4);
            let v = rng.random_range(0..=255u8);
            for y in y0..(y0 + h).min(size) {
                for x in x0..(x0 + w).min(size) {
                    img.put_pixel(x, y, Rgb([v, v, v]));
                }
            }
        }
        img
    }
}
