//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Images cross the boundary as RGBA byte arrays ready for `ImageData`;
//! structured results are JSON strings.

use image::RgbImage;
use nalgebra::Point2;
use serde::Serialize;
use viewsynth::features::{match_stack, FeatureConfig};
use viewsynth::geometry::{build_atlas, warp, AtlasParams, Canvas, Homography};
use viewsynth::motion::{detect_movements, interval_votes, DetectParams, DomSample, DomSeries, ForestParams, IntervalVote};
use viewsynth::occlusion::{degree_of_occlusion, segment_field_rgb};
use viewsynth::synthgen::{inject_occluder, Scenario, SyntheticRig};
use wasm_bindgen::prelude::*;

fn rgba(image: &RgbImage) -> Vec<u8> {
    image.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

fn js_error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn small_scenario(width: u32, height: u32) -> Scenario {
    Scenario::new(width.clamp(64, 640), height.clamp(48, 480), 30.0, 1)
}

/// Camera views of the synthetic rig and their alignment onto the
/// reference camera.
#[wasm_bindgen]
pub struct Alignment {
    width: u32,
    height: u32,
    views: Vec<RgbImage>,
    aligned: Vec<RgbImage>,
    errors: Vec<f64>,
    inliers: Vec<usize>,
}

#[wasm_bindgen]
impl Alignment {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn cameras(&self) -> usize {
        self.views.len()
    }

    /// Raw view of `camera` as RGBA.
    pub fn view(&self, camera: usize) -> Vec<u8> {
        rgba(&self.views[camera])
    }

    /// View of `camera` warped onto the reference camera as RGBA.
    pub fn aligned(&self, camera: usize) -> Vec<u8> {
        rgba(&self.aligned[camera])
    }

    /// Median distance in pixels between the estimated and true mappings
    /// over a grid of reference-view points.
    pub fn error(&self, camera: usize) -> f64 {
        self.errors[camera]
    }

    /// Inlier matches behind the camera's estimate; 0 for the reference.
    pub fn inliers(&self, camera: usize) -> usize {
        self.inliers[camera]
    }
}

fn grid_error(estimated: &Homography, truth: &nalgebra::Matrix3<f64>, width: u32, height: u32) -> f64 {
    let Ok(truth) = Homography::from_matrix(*truth) else {
        return f64::NAN;
    };
    let mut errors = Vec::new();
    for gy in 1..10 {
        for gx in 1..10 {
            let p = Point2::new(width as f64 * gx as f64 / 10.0, height as f64 * gy as f64 / 10.0);
            let Some(q) = truth.inverse().try_apply(&p) else { continue };
            if let Some(r) = estimated.try_apply(&q) {
                errors.push((r - p).norm());
            }
        }
    }
    if errors.is_empty() {
        return f64::NAN;
    }
    errors.sort_by(f64::total_cmp);
    errors[errors.len() / 2]
}

/// Renders the rig at the given pose offsets (millimetres and degrees),
/// estimates the atlas from one frame of matches and warps every view.
#[wasm_bindgen]
pub fn align_rig(seed: u64, width: u32, height: u32, lift: f64, yaw: f64, tilt: f64) -> Result<Alignment, JsError> {
    let mut scenario = small_scenario(width, height);
    scenario.pose.height -= lift;
    scenario.pose.yaw += yaw;
    scenario.pose.tilt_x += tilt;
    scenario.validate().map_err(js_error)?;
    let (width, height) = (scenario.width, scenario.height);
    let rig = SyntheticRig::new(scenario.clone(), seed).map_err(js_error)?;
    let ids = scenario.camera_ids();
    let views: Vec<RgbImage> = (0..ids.len()).map(|c| rig.render_frame(c, 1).0).collect();
    let matches = match_stack(&views, &FeatureConfig::default());
    let atlas = build_atlas(&matches, scenario.reference, &ids, &AtlasParams::default(), 0, seed).map_err(js_error)?;
    let truth = scenario.true_atlas(&scenario.pose);
    let canvas = Canvas::same(width, height);
    let aligned = views.iter().zip(&atlas.to_reference).map(|(v, h)| warp(v, h, &canvas).image).collect();
    let errors = atlas
        .to_reference
        .iter()
        .zip(&truth)
        .map(|(h, t)| grid_error(h, t, width, height))
        .collect();
    let inliers = (0..ids.len())
        .map(|c| {
            atlas
                .stats
                .iter()
                .filter(|s| s.from == ids[c])
                .map(|s| s.inliers)
                .min()
                .unwrap_or(0)
        })
        .collect();
    Ok(Alignment {
        width,
        height,
        views,
        aligned,
        errors,
        inliers,
    })
}

/// Field segmentation of every camera with one camera partly covered.
#[wasm_bindgen]
pub struct Occlusion {
    width: u32,
    height: u32,
    overlays: Vec<RgbImage>,
    areas: Vec<usize>,
    doo: f64,
}

#[wasm_bindgen]
impl Occlusion {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn cameras(&self) -> usize {
        self.overlays.len()
    }

    /// The view with field pixels tinted, as RGBA.
    pub fn overlay(&self, camera: usize) -> Vec<u8> {
        rgba(&self.overlays[camera])
    }

    pub fn area(&self, camera: usize) -> usize {
        self.areas[camera]
    }

    /// Degree of occlusion across all cameras; NaN when no field is visible.
    #[wasm_bindgen(getter)]
    pub fn doo(&self) -> f64 {
        self.doo
    }
}

/// Covers `coverage` of `camera`'s field with a disc and measures the
/// spread of field areas.
#[wasm_bindgen]
pub fn occlude(seed: u64, width: u32, height: u32, camera: usize, coverage: f64) -> Result<Occlusion, JsError> {
    let base = small_scenario(width, height);
    if camera >= base.rig.cameras {
        return Err(JsError::new(&format!("camera index {camera} out of range")));
    }
    let scenario = inject_occluder(&base, camera, coverage, (1, 1));
    let (width, height) = (scenario.width, scenario.height);
    let rig = SyntheticRig::new(scenario, seed).map_err(js_error)?;
    let mut overlays = Vec::new();
    let mut areas = Vec::new();
    for c in 0..base.rig.cameras {
        let (mut view, _) = rig.render_frame(c, 1);
        let field = segment_field_rgb(&view);
        for (x, y, p) in view.enumerate_pixels_mut() {
            if field.mask.get(x, y) {
                p[0] = p[0] / 2 + 127;
                p[1] /= 2;
                p[2] /= 2;
            } else {
                p.0 = p.0.map(|v| v / 3);
            }
        }
        overlays.push(view);
        areas.push(field.area);
    }
    let doo = degree_of_occlusion(&areas).unwrap_or(f64::NAN);
    Ok(Occlusion {
        width,
        height,
        overlays,
        areas,
        doo,
    })
}

#[derive(Serialize)]
struct DetectionTrace {
    frames: Vec<usize>,
    raw: Vec<Option<f64>>,
    inlier: Vec<bool>,
    smoothed: Vec<Option<f64>>,
    votes: Vec<IntervalVote>,
    events: Vec<usize>,
}

/// Runs outlier filtering, smoothing and interval voting on a misalignment
/// series sampled every `stride` frames. Negative values mark missing
/// samples. Returns the trace as JSON.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn detect_series(
    values: Vec<f64>,
    stride: usize,
    fps: f64,
    interval_seconds: f64,
    exceed_count: usize,
    window_seconds: f64,
    ma_window: usize,
    seed: u64,
) -> Result<String, JsError> {
    if stride == 0 || ma_window == 0 || !(fps > 0.0 && interval_seconds > 0.0 && window_seconds > 0.0) {
        return Err(JsError::new("stride, window and rates must be positive"));
    }
    let samples: Vec<DomSample> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| DomSample {
            t: 1 + i * stride,
            value: (v >= 0.0 && v.is_finite()).then_some(v),
        })
        .collect();
    let mut series = DomSeries::new(samples, stride);
    if series.samples.iter().filter(|s| s.value.is_some()).count() >= 2 {
        series.filter_outliers(&ForestParams::default(), seed);
    }
    series.smooth(ma_window);
    let params = DetectParams {
        interval_seconds,
        exceed_count,
        window_seconds,
    };
    let trace = DetectionTrace {
        frames: series.samples.iter().map(|s| s.t).collect(),
        raw: series.samples.iter().map(|s| s.value).collect(),
        inlier: series.inlier.clone(),
        smoothed: series.smoothed.clone(),
        votes: interval_votes(&series, fps, &params),
        events: detect_movements(&series, fps, &params),
    };
    serde_json::to_string(&trace).map_err(js_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_pose_aligns_within_a_pixel() {
        let a = align_rig(1, 320, 240, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(a.cameras(), 5);
        assert_eq!(a.view(0).len(), 320 * 240 * 4);
        for c in 0..5 {
            assert!(a.error(c) < 1.0, "camera {c}: {}", a.error(c));
        }
    }

    #[test]
    fn heavy_occlusion_raises_the_degree() {
        let clear = occlude(1, 320, 240, 2, 0.0).unwrap();
        let covered = occlude(1, 320, 240, 2, 0.6).unwrap();
        assert!(clear.doo() < 0.1);
        assert!(covered.doo() > 0.5);
        assert!(covered.area(2) < clear.area(2));
    }

    #[test]
    fn step_series_yields_one_event() {
        let values: Vec<f64> = (0..600).map(|i| if i < 300 { 0.2 } else { 3.0 }).collect();
        let json = detect_series(values, 30, 30.0, 75.0, 4, 600.0, 31, 0).unwrap();
        let trace: serde_json::Value = serde_json::from_str(&json).unwrap();
        let events = trace["events"].as_array().unwrap();
        assert_eq!(events.len(), 1);
        let t = events[0].as_u64().unwrap() as i64;
        assert!((t - 9001).abs() <= 2250, "{t}");
    }
}
