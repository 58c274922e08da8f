//! Synthetic multi-camera rig over a textured plane, with scripted rig moves
//! and disc occluders. Every output comes with its ground truth.

mod render;
mod rig;
mod texture;

pub use render::{render, CameraCoverage, GroundTruth, SyntheticRig, TruthSegment};
pub use rig::{RigGeometry, RigPose};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elliptical surgical field centred on the world origin, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSpec {
    pub rx: f64,
    pub ry: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec { rx: 260.0, ry: 190.0 }
    }
}

impl FieldSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x / self.rx).powi(2) + (y / self.ry).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OccluderShape {
    /// Disc fixed in one camera's image; position and radius in pixels.
    Camera { camera: usize, radius: f64 },
    /// Disc floating at `height` millimetres above the plane, seen by all
    /// cameras; position and radius in millimetres.
    World { radius: f64, height: f64 },
}

/// A flat-coloured disc that moves linearly from `from` to `to` over the
/// inclusive frame range `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub shape: OccluderShape,
    pub start: usize,
    pub end: usize,
    pub from: [f64; 2],
    pub to: [f64; 2],
    #[serde(default = "default_occluder_hue")]
    pub hue: u8,
}

fn default_occluder_hue() -> u8 {
    90
}

impl Occluder {
    pub fn active(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn position(&self, t: usize) -> [f64; 2] {
        let s = if self.end > self.start {
            (t.clamp(self.start, self.end) - self.start) as f64 / (self.end - self.start) as f64
        } else {
            0.0
        };
        [
            self.from[0] + (self.to[0] - self.from[0]) * s,
            self.from[1] + (self.to[1] - self.from[1]) * s,
        ]
    }
}

/// The rig is pushed to `pose`, starting after frame `frame` and settling
/// `transition` frames later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigMove {
    pub frame: usize,
    #[serde(default = "default_transition")]
    pub transition: usize,
    pub pose: RigPose,
    /// Whether the surgeon's arms block some cameras around the move.
    #[serde(default = "default_true")]
    pub arms: bool,
}

fn default_transition() -> usize {
    90
}

fn default_true() -> bool {
    true
}

/// Occluders added around every rig move: discs over the field in the
/// listed cameras, from `lead` seconds before the move until `tail` seconds
/// after it settles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmSpec {
    pub cameras: Vec<usize>,
    pub lead: f64,
    pub tail: f64,
    /// Disc radius as a fraction of the image width.
    pub radius: f64,
}

impl Default for ArmSpec {
    fn default() -> Self {
        ArmSpec {
            cameras: vec![1, 3],
            lead: 20.0,
            tail: 5.0,
            radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Number of frames.
    pub duration: usize,
    /// Index of the reference camera.
    pub reference: usize,
    pub rig: RigGeometry,
    /// Pose before the first move.
    pub pose: RigPose,
    pub field: FieldSpec,
    /// Standard deviation of the per-pixel Gaussian noise, in 8-bit levels.
    pub noise: f64,
    pub rig_moves: Vec<RigMove>,
    pub occluders: Vec<Occluder>,
    pub arms: ArmSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            width: 640,
            height: 480,
            fps: 30.0,
            duration: 3600,
            reference: 0,
            rig: RigGeometry::default(),
            pose: RigPose::default(),
            field: FieldSpec::default(),
            noise: 1.5,
            rig_moves: Vec::new(),
            occluders: Vec::new(),
            arms: ArmSpec::default(),
        }
    }
}

impl Scenario {
    pub fn new(width: u32, height: u32, fps: f64, duration: usize) -> Self {
        Scenario {
            width,
            height,
            fps,
            duration,
            ..Scenario::default()
        }
    }

    /// Appends a rig move that lifts and tilts the rig. Successive calls
    /// alternate the direction so the poses stay distinct.
    pub fn with_move(mut self, frame: usize) -> Self {
        let k = self.rig_moves.len();
        let prev = self.rig_moves.last().map(|m| m.pose).unwrap_or(self.pose);
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let pose = RigPose {
            x: prev.x + 40.0 * sign,
            y: prev.y - 30.0 * sign,
            height: prev.height - 150.0 * sign,
            yaw: prev.yaw + 8.0 * sign,
            tilt_x: prev.tilt_x + 6.0 * sign,
            tilt_y: prev.tilt_y - 4.0 * sign,
        };
        self.rig_moves.push(RigMove {
            frame,
            transition: (3.0 * self.fps).round() as usize,
            pose,
            arms: true,
        });
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::parse("scenario", e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn camera_ids(&self) -> Vec<String> {
        (1..=self.rig.cameras).map(|i| format!("cam{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.width < 16 || self.height < 16 {
            return bad("scenario frames must be at least 16x16".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) || self.duration == 0 {
            return bad("scenario needs a positive fps and duration".into());
        }
        if self.rig.cameras < 2 || self.reference >= self.rig.cameras {
            return bad("scenario needs at least two cameras and a valid reference".into());
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return bad("noise must be non-negative".into());
        }
        let mut last = 0;
        for m in &self.rig_moves {
            if m.frame <= last || m.frame >= self.duration || m.transition == 0 {
                return bad(format!("rig move at frame {} is out of order or out of range", m.frame));
            }
            last = m.frame + m.transition;
        }
        for o in &self.occluders {
            if o.start > o.end {
                return bad("occluder interval is empty".into());
            }
            if let OccluderShape::Camera { camera, .. } = o.shape {
                if camera >= self.rig.cameras {
                    return bad(format!("occluder camera {camera} does not exist"));
                }
            }
        }
        for k in 0..=self.rig_moves.len() {
            for h in self.camera_to_image(&self.segment_pose(k)) {
                if h.determinant().abs() < 1e-12 || h.try_inverse().is_none() {
                    return bad("rig pose gives a singular plane homography".into());
                }
            }
        }
        Ok(())
    }

    /// Pose in effect at frame `t`, interpolated during transitions.
    pub fn pose_at(&self, t: usize) -> RigPose {
        let mut pose = self.pose;
        for m in &self.rig_moves {
            if t <= m.frame {
                break;
            }
            if t >= m.frame + m.transition {
                pose = m.pose;
            } else {
                let s = (t - m.frame) as f64 / m.transition as f64;
                return pose.lerp(&m.pose, s);
            }
        }
        pose
    }

    /// Settled pose of segment `k` (0 is before any move).
    pub fn segment_pose(&self, k: usize) -> RigPose {
        if k == 0 {
            self.pose
        } else {
            self.rig_moves[k - 1].pose
        }
    }

    /// Plane-to-image homography for every camera.
    pub(crate) fn camera_to_image(&self, pose: &RigPose) -> Vec<Matrix3<f64>> {
        (0..self.rig.cameras)
            .map(|c| self.rig.camera(pose, c, self.width, self.height).plane_to_image(0.0))
            .collect()
    }

    /// True camera-to-reference homographies for a pose.
    pub fn true_atlas(&self, pose: &RigPose) -> Vec<Matrix3<f64>> {
        let planes = self.camera_to_image(pose);
        let reference = planes[self.reference];
        planes
            .iter()
            .map(|g| {
                let m = reference * g.try_inverse().expect("validated pose");
                m / m[(2, 2)]
            })
            .collect()
    }

    /// Scripted occluders plus the arms around each rig move.
    pub fn all_occluders(&self) -> Vec<Occluder> {
        let mut out = self.occluders.clone();
        for m in self.rig_moves.iter().filter(|m| m.arms) {
            let lead = (self.arms.lead * self.fps).round() as usize;
            let tail = (self.arms.tail * self.fps).round() as usize;
            let start = m.frame.saturating_sub(lead).max(1);
            let end = (m.frame + m.transition + tail).min(self.duration);
            let pose = self.pose_at(m.frame);
            for &camera in self.arms.cameras.iter().filter(|&&c| c < self.rig.cameras) {
                let (pixels, _) = self.field_pixels(camera, &pose);
                let center = centroid(&pixels).unwrap_or([self.width as f64 / 2.0, self.height as f64 / 2.0]);
                out.push(Occluder {
                    shape: OccluderShape::Camera {
                        camera,
                        radius: self.arms.radius * self.width as f64,
                    },
                    start,
                    end,
                    from: center,
                    to: center,
                    hue: default_occluder_hue(),
                });
            }
        }
        out
    }

    /// Pixels of one camera that see the field, without occluders.
    pub(crate) fn field_pixels(&self, camera: usize, pose: &RigPose) -> (Vec<[f64; 2]>, Matrix3<f64>) {
        let g = self.rig.camera(pose, camera, self.width, self.height).plane_to_image(0.0);
        let inv = g.try_inverse().expect("validated pose");
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let w = inv * Vector3::new(x as f64, y as f64, 1.0);
                if w.z != 0.0 && self.field.contains(w.x / w.z, w.y / w.z) {
                    out.push([x as f64, y as f64]);
                }
            }
        }
        (out, inv)
    }
}

fn centroid(points: &[[f64; 2]]) -> Option<[f64; 2]> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    Some([sx / n, sy / n])
}

/// Adds a static disc to `camera` over `interval` (inclusive), centred on
/// the field and sized so that it hides `coverage` of the field's pixels.
pub fn inject_occluder(
    scenario: &Scenario,
    camera: usize,
    coverage: f64,
    interval: (usize, usize),
) -> Scenario {
    let mut out = scenario.clone();
    let coverage = coverage.clamp(0.0, 1.0);
    let (pixels, _) = scenario.field_pixels(camera, &scenario.pose_at(interval.0));
    let k = (coverage * pixels.len() as f64).round() as usize;
    if k == 0 {
        return out;
    }
    let center = centroid(&pixels).expect("non-empty field");
    let mut dist: Vec<f64> = pixels
        .iter()
        .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
        .collect();
    dist.sort_by(|a, b| a.total_cmp(b));
    let radius = if k >= dist.len() {
        dist[dist.len() - 1] + 1.0
    } else {
        (dist[k - 1] + dist[k]) / 2.0
    };
    out.occluders.push(Occluder {
        shape: OccluderShape::Camera { camera, radius },
        start: interval.0,
        end: interval.1,
        from: center,
        to: center,
        hue: default_occluder_hue(),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_atlas_is_identity() {
        let s = Scenario::new(320, 240, 30.0, 100);
        let atlas = s.true_atlas(&s.pose);
        assert!((atlas[0] - Matrix3::identity()).norm() < 1e-12);
        assert!((atlas[1] - Matrix3::identity()).norm() > 1e-3);
    }

    #[test]
    fn pose_interpolates_through_transition() {
        let s = Scenario::new(320, 240, 30.0, 3000).with_move(1000);
        let m = s.rig_moves[0];
        assert_eq!(s.pose_at(1000), s.pose);
        assert_eq!(s.pose_at(1000 + m.transition), m.pose);
        let mid = s.pose_at(1000 + m.transition / 2);
        assert!(mid.height < s.pose.height && mid.height > m.pose.height);
    }

    #[test]
    fn validation_rejects_bad_moves() {
        let mut s = Scenario::new(320, 240, 30.0, 3000).with_move(1000).with_move(2000);
        assert!(s.validate().is_ok());
        s.rig_moves.swap(0, 1);
        assert!(s.validate().is_err());
        let s = Scenario::new(320, 240, 30.0, 500).with_move(900);
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::new(320, 240, 30.0, 3000).with_move(1000);
        let s = inject_occluder(&s, 2, 0.5, (10, 20));
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn injected_disc_covers_requested_fraction() {
        let s = Scenario::new(320, 240, 30.0, 100);
        assert_eq!(inject_occluder(&s, 2, 0.0, (1, 100)), s);
        for cov in [0.3, 0.6, 1.0] {
            let o = inject_occluder(&s, 2, cov, (1, 100));
            let occ = o.occluders[0];
            let OccluderShape::Camera { radius, .. } = occ.shape else {
                panic!()
            };
            let (pixels, _) = s.field_pixels(2, &s.pose);
            let hidden = pixels
                .iter()
                .filter(|p| (p[0] - occ.from[0]).powi(2) + (p[1] - occ.from[1]).powi(2) <= radius * radius)
                .count();
            let frac = hidden as f64 / pixels.len() as f64;
            assert!((frac - cov).abs() < 0.02, "{frac} vs {cov}");
        }
    }
}
