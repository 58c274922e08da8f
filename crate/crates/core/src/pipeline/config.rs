use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enhance::FillParams;
use crate::error::{Error, Result};
use crate::features::{AccumulateConfig, FeatureConfig};
use crate::geometry::{AtlasParams, RansacParams};
use crate::motion::{DetectParams, DomParams, ForestParams};
use crate::occlusion::CalibrationSearch;
use crate::selector::SelectionParams;

/// Every tunable of the pipeline. Loaded from TOML; missing keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed for every randomized step.
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Warp views onto the reference camera. When off, the selected raw
    /// frames are used as they are and no movement detection runs.
    pub align: bool,
    pub centering: bool,
    pub filling: bool,
    /// Length of a movement voting interval, in seconds.
    pub vote_interval: f64,
    /// Samples above the threshold needed for an interval to vote.
    pub exceed_count: usize,
    /// Trailing span the misalignment threshold is computed over, in seconds.
    pub threshold_window: f64,
    /// Occlusion degree below which a frame counts as occlusion-free.
    pub doo_threshold: f64,
    /// Consecutive occlusion-free samples required for calibration.
    pub doo_run: usize,
    /// Frames between occlusion samples.
    pub doo_stride: usize,
    /// Seconds between misalignment samples.
    pub dom_stride: f64,
    /// Moving-average window, in samples.
    pub ma_window: usize,
    pub forest: ForestParams,
    pub ransac: RansacParams,
    /// Minimum inliers for a camera pair during calibration.
    pub min_inliers: usize,
    pub cadence: usize,
    pub dwell_min: usize,
    /// Smoothing factor of the centering offset.
    pub center_alpha: f64,
    pub fill: FillParams,
    pub psnr_cap: f64,
    pub features: FeatureConfig,
    pub accumulate: AccumulateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: 0,
            align: true,
            centering: true,
            filling: true,
            vote_interval: 75.0,
            exceed_count: 4,
            threshold_window: 600.0,
            doo_threshold: 0.5,
            doo_run: 5,
            doo_stride: 30,
            dom_stride: 1.0,
            ma_window: 31,
            forest: ForestParams::default(),
            ransac: RansacParams::default(),
            min_inliers: 12,
            cadence: 30,
            dwell_min: 60,
            center_alpha: 0.05,
            fill: FillParams::default(),
            psnr_cap: crate::metrics::DEFAULT_PSNR_CAP,
            features: FeatureConfig::default(),
            accumulate: AccumulateConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::parse("config", e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vote_interval", self.vote_interval),
            ("threshold_window", self.threshold_window),
            ("doo_threshold", self.doo_threshold),
            ("dom_stride", self.dom_stride),
            ("center_alpha", self.center_alpha),
            ("psnr_cap", self.psnr_cap),
            ("forest.contamination", self.forest.contamination),
            ("ransac.threshold", self.ransac.threshold),
            ("ransac.confidence", self.ransac.confidence),
            ("features.ratio", self.features.ratio as f64),
            ("accumulate.dedup_bin", self.accumulate.dedup_bin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("exceed_count", self.exceed_count),
            ("doo_run", self.doo_run),
            ("doo_stride", self.doo_stride),
            ("ma_window", self.ma_window),
            ("forest.trees", self.forest.trees),
            ("forest.subsample", self.forest.subsample),
            ("ransac.max_iterations", self.ransac.max_iterations),
            ("min_inliers", self.min_inliers),
            ("cadence", self.cadence),
            ("dwell_min", self.dwell_min),
            ("fill.kernel", self.fill.kernel),
            ("features.max_points", self.features.max_points),
            ("accumulate.window", self.accumulate.window),
            ("accumulate.stride", self.accumulate.stride),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.fill.kernel.is_multiple_of(2) {
            return Err(Error::InvalidParameter("fill.kernel must be odd".into()));
        }
        if self.center_alpha > 1.0 || self.forest.contamination >= 0.5 || self.ransac.confidence >= 1.0 {
            return Err(Error::InvalidParameter(
                "center_alpha, forest.contamination and ransac.confidence must be fractions".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn detect_params(&self) -> DetectParams {
        DetectParams {
            interval_seconds: self.vote_interval,
            exceed_count: self.exceed_count,
            window_seconds: self.threshold_window,
        }
    }

    pub(crate) fn calibration_search(&self) -> CalibrationSearch {
        CalibrationSearch {
            tau: self.doo_threshold,
            run: self.doo_run,
            stride: self.doo_stride,
        }
    }

    pub(crate) fn dom_params(&self) -> DomParams {
        DomParams {
            features: self.features,
            ransac: RansacParams {
                refine: false,
                ..self.ransac
            },
        }
    }

    pub(crate) fn atlas_params(&self) -> AtlasParams {
        AtlasParams {
            ransac: self.ransac,
            min_inliers: self.min_inliers,
        }
    }

    pub(crate) fn selection_params(&self) -> SelectionParams {
        SelectionParams {
            cadence: self.cadence,
            dwell_min: self.dwell_min,
        }
    }

    /// Frames between misalignment samples for a given frame rate.
    pub fn dom_stride_frames(&self, fps: f64) -> usize {
        ((self.dom_stride * fps).round() as usize).max(1)
    }
}

/// Independent stream seeds derived from the root seed.
pub(crate) fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
