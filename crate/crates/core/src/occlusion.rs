//! Hue-based field segmentation, the degree of occlusion across cameras,
//! and the search for occlusion-free calibration frames.

use std::io::Write;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{frame_stack, to_hsv, FrameSource, HsvImage};
use crate::raster::Mask;

/// Inclusive hue ranges (0..=179 scale) counted as field.
pub const FIELD_HUES: [(u8, u8); 2] = [(0, 30), (150, 179)];

#[inline]
pub fn is_field_hue(hue: u8) -> bool {
    FIELD_HUES.iter().any(|&(lo, hi)| (lo..=hi).contains(&hue))
}

/// Field pixels of one image with their area and centroid. Pixel `(x, y)`
/// covers `[x, x+1) x [y, y+1)`, so the centroid of a full image is
/// `(W/2, H/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMask {
    pub mask: Mask,
    pub area: usize,
    pub centroid: Option<(f64, f64)>,
}

impl FieldMask {
    pub fn from_mask(mask: Mask) -> Self {
        let (w, h) = mask.dimensions();
        let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        let centroid = (n > 0).then(|| (sx / n as f64, sy / n as f64));
        FieldMask {
            mask,
            area: n,
            centroid,
        }
    }
}

/// Pixels with a field hue and non-zero saturation.
pub fn segment_field(image: &HsvImage) -> FieldMask {
    let (w, h) = image.dimensions();
    let (hue, sat) = (image.hue(), image.saturation());
    let mask = Mask::from_fn(w, h, |x, y| {
        let i = (y * w + x) as usize;
        sat[i] > 0 && is_field_hue(hue[i])
    });
    FieldMask::from_mask(mask)
}

pub fn segment_field_rgb(image: &RgbImage) -> FieldMask {
    segment_field(&to_hsv(image))
}

/// Field area of an RGB image, without building the mask.
pub fn field_area(image: &RgbImage) -> usize {
    image
        .pixels()
        .filter(|p| {
            let [h, s, _] = crate::ingest::rgb_to_hsv(p.0);
            s > 0 && is_field_hue(h)
        })
        .count()
}

/// Degree of occlusion at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DooSample {
    pub t: usize,
    pub areas: Vec<usize>,
    /// `None` when the mean area is zero.
    pub value: Option<f64>,
}

/// `(max - min) / mean` of the per-camera field areas.
pub fn degree_of_occlusion(areas: &[usize]) -> Option<f64> {
    let max = *areas.iter().max()?;
    let min = *areas.iter().min()?;
    let mean = areas.iter().map(|&a| a as f64).sum::<f64>() / areas.len() as f64;
    (mean > 0.0).then(|| (max - min) as f64 / mean)
}

pub fn doo_of_images(t: usize, images: &[RgbImage]) -> DooSample {
    let areas: Vec<usize> = images.iter().map(field_area).collect();
    let value = degree_of_occlusion(&areas);
    DooSample { t, areas, value }
}

/// Evaluates the degree of occlusion on the raw camera frames at `t`.
pub fn doo_at<S: FrameSource + ?Sized>(source: &S, t: usize) -> Result<DooSample> {
    let stack = frame_stack(source, t)?;
    Ok(doo_of_images(t, &stack.images))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSearch {
    /// Samples below this value count as occlusion-free.
    pub tau: f64,
    /// Consecutive occlusion-free samples required.
    pub run: usize,
    /// Frames between samples.
    pub stride: usize,
}

impl Default for CalibrationSearch {
    fn default() -> Self {
        CalibrationSearch {
            tau: 0.5,
            run: 5,
            stride: 30,
        }
    }
}

/// Frame of the first sample that starts `run` consecutive samples below
/// `tau`. Missing values break a run.
pub fn first_stable_run(samples: &[(usize, Option<f64>)], tau: f64, run: usize) -> Option<usize> {
    let run = run.max(1);
    let mut streak = 0;
    for (i, &(_, v)) in samples.iter().enumerate() {
        if v.is_some_and(|v| v < tau) {
            streak += 1;
            if streak == run {
                return Some(samples[i + 1 - run].0);
            }
        } else {
            streak = 0;
        }
    }
    None
}

/// Scans frames `first, first + stride, ...` for the first occlusion-free
/// run. Every evaluated sample is appended to `log` when given.
pub fn find_calibration_frame<S: FrameSource + ?Sized>(
    source: &S,
    first: usize,
    search: &CalibrationSearch,
    mut log: Option<&mut Vec<DooSample>>,
) -> Result<usize> {
    if search.stride == 0 {
        return Err(Error::InvalidParameter("calibration stride must be positive".into()));
    }
    let n = source.frame_count();
    let run = search.run.max(1);
    // Samples are evaluated in batches so the run scan can stop early.
    let batch = 8 * run;
    let mut frames = (first.max(1)..=n).step_by(search.stride).peekable();
    let mut samples: Vec<(usize, Option<f64>)> = Vec::new();
    while frames.peek().is_some() {
        let chunk: Vec<usize> = frames.by_ref().take(batch).collect();
        let computed = crate::parallel::map(chunk, |t| doo_at(source, t));
        for s in computed {
            let s = s?;
            samples.push((s.t, s.value));
            if let Some(log) = log.as_deref_mut() {
                log.push(s);
            }
        }
        if let Some(t) = first_stable_run(&samples, search.tau, run) {
            return Ok(t);
        }
    }
    Err(Error::NoCalibrationFrame(first.saturating_sub(1)))
}

/// Writes `t, area per camera..., doo` rows.
pub fn write_doo_csv(path: &Path, camera_ids: &[String], samples: &[DooSample]) -> Result<()> {
    let mut out = String::from("t");
    for id in camera_ids {
        out.push_str(&format!(",area_{id}"));
    }
    out.push_str(",doo\n");
    for s in samples {
        out.push_str(&s.t.to_string());
        for a in &s.areas {
            out.push_str(&format!(",{a}"));
        }
        match s.value {
            Some(v) => out.push_str(&format!(",{v}\n")),
            None => out.push_str(",\n"),
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
