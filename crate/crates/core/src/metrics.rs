//! Video stability metrics: interframe transformation fidelity (mean
//! consecutive-frame PSNR) and the average speed of tracked feature points.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{detect, match_keypoints, FeatureConfig, Keypoint};

pub const DEFAULT_PSNR_CAP: f64 = 100.0;

/// PSNR over all channels in dB, capped at `cap` (reached for identical
/// images).
pub fn psnr(a: &RgbImage, b: &RgbImage, cap: f64) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    let sse: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    let n = a.as_raw().len();
    if sse == 0 || n == 0 {
        return Ok(cap);
    }
    let mse = sse as f64 / n as f64;
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(cap))
}

/// Running mean of consecutive-frame PSNR.
#[derive(Debug, Clone)]
pub struct ItfAccumulator {
    cap: f64,
    previous: Option<RgbImage>,
    sum: f64,
    pairs: usize,
}

impl ItfAccumulator {
    pub fn new(cap: f64) -> Self {
        ItfAccumulator {
            cap,
            previous: None,
            sum: 0.0,
            pairs: 0,
        }
    }

    pub fn push(&mut self, frame: &RgbImage) -> Result<()> {
        if let Some(prev) = &self.previous {
            self.sum += psnr(prev, frame, self.cap)?;
            self.pairs += 1;
        }
        self.previous = Some(frame.clone());
        Ok(())
    }

    pub fn finish(&self) -> Result<f64> {
        if self.pairs == 0 {
            return Err(Error::TooFewFrames);
        }
        Ok(self.sum / self.pairs as f64)
    }
}

pub fn itf(frames: &[RgbImage], cap: f64) -> Result<f64> {
    let mut acc = ItfAccumulator::new(cap);
    for f in frames {
        acc.push(f)?;
    }
    acc.finish()
}

/// Mean displacement of the matched keypoints between two frames, and the
/// number of matches.
pub fn frame_displacement(a: &[Keypoint], b: &[Keypoint], features: &FeatureConfig) -> (f64, usize) {
    let matches = match_keypoints(a, b, &features.match_params());
    let sum: f64 = matches
        .iter()
        .map(|&(i, j)| {
            let (dx, dy) = ((b[j].x - a[i].x) as f64, (b[j].y - a[i].y) as f64);
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    (if matches.is_empty() { 0.0 } else { sum / matches.len() as f64 }, matches.len())
}

/// Running average point speed. Each frame transition contributes the mean
/// displacement of its matched points; transitions without matches are
/// skipped.
#[derive(Debug, Clone)]
pub struct SpeedAccumulator {
    features: FeatureConfig,
    previous: Option<Vec<Keypoint>>,
    sum: f64,
    transitions: usize,
    frames: usize,
    tracked: usize,
}

impl SpeedAccumulator {
    pub fn new(features: FeatureConfig) -> Self {
        SpeedAccumulator {
            features,
            previous: None,
            sum: 0.0,
            transitions: 0,
            frames: 0,
            tracked: 0,
        }
    }

    pub fn push(&mut self, frame: &RgbImage) {
        self.push_keypoints(detect(frame, self.features.max_points));
    }

    pub fn push_keypoints(&mut self, keypoints: Vec<Keypoint>) {
        self.frames += 1;
        if let Some(prev) = &self.previous {
            let (mean, n) = frame_displacement(prev, &keypoints, &self.features);
            if n > 0 {
                self.sum += mean;
                self.transitions += 1;
                self.tracked += n;
            }
        }
        self.previous = Some(keypoints);
    }

    pub fn tracked_points(&self) -> usize {
        self.tracked
    }

    pub fn finish(&self) -> Result<f64> {
        if self.frames < 2 {
            return Err(Error::TooFewFrames);
        }
        if self.transitions == 0 {
            return Err(Error::NoData("no trackable feature points".into()));
        }
        Ok(self.sum / self.transitions as f64)
    }
}

pub fn avspeed(frames: &[RgbImage], features: &FeatureConfig) -> Result<f64> {
    let keypoints = crate::parallel::map(frames.iter().collect(), |f: &RgbImage| detect(f, features.max_points));
    let mut acc = SpeedAccumulator::new(*features);
    for k in keypoints {
        acc.push_keypoints(k);
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub itf_db: f64,
    /// `None` when no feature points could be tracked.
    pub avspeed: Option<f64>,
    pub frames_evaluated: usize,
    /// Matched point pairs summed over all transitions.
    pub tracked_points: usize,
    pub psnr_cap: f64,
}

/// Streams frames into both metrics.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    itf: ItfAccumulator,
    speed: SpeedAccumulator,
    cap: f64,
}

impl MetricsAccumulator {
    pub fn new(cap: f64, features: FeatureConfig) -> Self {
        MetricsAccumulator {
            itf: ItfAccumulator::new(cap),
            speed: SpeedAccumulator::new(features),
            cap,
        }
    }

    pub fn push(&mut self, frame: &RgbImage, keypoints: Vec<Keypoint>) -> Result<()> {
        self.itf.push(frame)?;
        self.speed.push_keypoints(keypoints);
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        let itf_db = self.itf.finish()?;
        let avspeed = match self.speed.finish() {
            Ok(v) => Some(v),
            Err(Error::NoData(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            itf_db,
            avspeed,
            frames_evaluated: self.speed.frames,
            tracked_points: self.speed.tracked_points(),
            psnr_cap: self.cap,
        })
    }
}

pub fn evaluate_frames(frames: &[RgbImage], cap: f64, features: &FeatureConfig) -> Result<MetricsReport> {
    let keypoints = crate::parallel::map(frames.iter().collect(), |f: &RgbImage| detect(f, features.max_points));
    let mut acc = MetricsAccumulator::new(cap, *features);
    for (f, k) in frames.iter().zip(keypoints) {
        acc.push(f, k)?;
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: MetricsReport,
    pub b: MetricsReport,
    /// `a.itf_db / b.itf_db`.
    pub itf_ratio: f64,
    /// `a.avspeed / b.avspeed`, when both are defined and `b` is non-zero.
    pub avspeed_ratio: Option<f64>,
}

pub fn compare(a: MetricsReport, b: MetricsReport) -> Comparison {
    let itf_ratio = a.itf_db / b.itf_db;
    let avspeed_ratio = match (a.avspeed, b.avspeed) {
        (Some(x), Some(y)) if y > 0.0 => Some(x / y),
        (Some(x), Some(y)) if x == 0.0 && y == 0.0 => Some(1.0),
        _ => None,
    };
    Comparison {
        a,
        b,
        itf_ratio,
        avspeed_ratio,
    }
}

/// PNG files of a directory in name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn load_frames(dir: &Path) -> Result<Vec<RgbImage>> {
    frame_paths(dir)?
        .iter()
        .map(|p| {
            image::open(p)
                .map(|img| img.to_rgb8())
                .map_err(|e| Error::parse(p.display().to_string(), e))
        })
        .collect()
}

/// Evaluates a directory of frames without holding them all in memory.
pub fn evaluate_dir(dir: &Path, cap: f64, features: &FeatureConfig) -> Result<MetricsReport> {
    let paths = frame_paths(dir)?;
    if paths.len() < 2 {
        return Err(Error::TooFewFrames);
    }
    let mut acc = MetricsAccumulator::new(cap, *features);
    for chunk in paths.chunks(16) {
        let loaded = crate::parallel::map(chunk.to_vec(), |p: PathBuf| -> Result<(RgbImage, Vec<Keypoint>)> {
            let img = image::open(&p)
                .map_err(|e| Error::parse(p.display().to_string(), e))?
                .to_rgb8();
            let k = detect(&img, features.max_points);
            Ok((img, k))
        });
        for item in loaded {
            let (img, k) = item?;
            acc.push(&img, k)?;
        }
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn noise_image(w: u32, h: u32, seed: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let v = (x.wrapping_mul(73856093) ^ y.wrapping_mul(19349663) ^ seed.wrapping_mul(83492791)) % 200;
            Rgb([v as u8, (v / 2) as u8, 30])
        })
    }

    #[test]
    fn psnr_closed_forms() {
        let a = noise_image(20, 10, 1);
        assert_eq!(psnr(&a, &a, 100.0).unwrap(), 100.0);
        let b = RgbImage::from_fn(20, 10, |x, y| {
            let p = a.get_pixel(x, y);
            Rgb([p[0] + 16, p[1] + 16, p[2] + 16])
        });
        let v = psnr(&a, &b, 100.0).unwrap();
        assert!((v - 10.0 * (255.0f64 * 255.0 / 256.0).log10()).abs() < 1e-9);
        assert!((v - 24.05).abs() < 0.01);
        let black = RgbImage::new(4, 4);
        let white = RgbImage::from_pixel(4, 4, Rgb([255, 255, 255]));
        assert_eq!(psnr(&black, &white, 100.0).unwrap(), 0.0);
        assert!(psnr(&black, &RgbImage::new(3, 4), 100.0).is_err());
        assert_eq!(psnr(&a, &b, 100.0).unwrap(), psnr(&b, &a, 100.0).unwrap());
    }

    #[test]
    fn itf_cases() {
        let a = noise_image(16, 16, 2);
        assert_eq!(itf(&[a.clone(), a.clone(), a.clone()], 100.0).unwrap(), 100.0);
        assert!(matches!(itf(std::slice::from_ref(&a), 100.0), Err(Error::TooFewFrames)));
        let b = RgbImage::from_fn(16, 16, |x, y| {
            let p = a.get_pixel(x, y);
            Rgb([p[0] + 16, p[1] + 16, p[2] + 16])
        });
        let single = itf(&[a.clone(), b.clone()], 100.0).unwrap();
        assert_eq!(single, psnr(&a, &b, 100.0).unwrap());
    }

    #[test]
    fn static_video_has_zero_speed() {
        let img = crate::features::tests_support::blocks(96, 4);
        let v = avspeed(&[img.clone(), img.clone(), img], &FeatureConfig::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn translating_video_speed() {
        let big = crate::features::tests_support::blocks(200, 7);
        let frames: Vec<RgbImage> = (0..6)
            .map(|k| image::imageops::crop_imm(&big, 3 * k, 20, 120, 120).to_image())
            .collect();
        let v = avspeed(&frames, &FeatureConfig::default()).unwrap();
        assert!((v - 3.0).abs() <= 0.2, "{v}");
    }

    #[test]
    fn untrackable_video_has_no_data() {
        let flat = RgbImage::from_pixel(40, 40, Rgb([90, 90, 90]));
        assert!(matches!(avspeed(&[flat.clone(), flat], &FeatureConfig::default()), Err(Error::NoData(_))));
    }
}
