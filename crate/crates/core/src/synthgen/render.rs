use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::texture::Texture;
use super::{Occluder, OccluderShape, RigPose, Scenario};
use crate::error::{Error, Result};
use crate::ingest::{frame_file_name, hsv_to_rgb, FrameSource, Manifest};

/// Renders scenario frames on demand; implements [`FrameSource`] so the
/// pipeline can run on it without touching the disk.
pub struct SyntheticRig {
    scenario: Scenario,
    seed: u64,
    ids: Vec<String>,
    texture: Texture,
    occluders: Vec<Occluder>,
    /// Plane-to-texture mapping: the reference camera at the initial pose.
    plane_to_texture: Matrix3<f64>,
}

enum Hit {
    Camera { c: [f64; 2], r2: f64 },
    World { to_plane: Matrix3<f64>, c: [f64; 2], r2: f64 },
}

struct ActiveOccluder {
    hit: Hit,
    color: [f32; 3],
}

impl ActiveOccluder {
    #[inline]
    fn covers(&self, x: f64, y: f64) -> bool {
        match &self.hit {
            Hit::Camera { c, r2 } => (x - c[0]).powi(2) + (y - c[1]).powi(2) <= *r2,
            Hit::World { to_plane, c, r2 } => {
                let w = to_plane * Vector3::new(x, y, 1.0);
                if w.z == 0.0 {
                    return false;
                }
                (w.x / w.z - c[0]).powi(2) + (w.y / w.z - c[1]).powi(2) <= *r2
            }
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SyntheticRig {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let plane_to_texture = scenario.camera_to_image(&scenario.pose)[scenario.reference];
        let to_plane = plane_to_texture.try_inverse().expect("validated pose");
        let field = scenario.field;
        let margin = scenario.width.max(scenario.height) / 2;
        let texture = Texture::generate(scenario.width, scenario.height, margin, seed, |u, v| {
            let w = to_plane * Vector3::new(u, v, 1.0);
            w.z != 0.0 && field.contains(w.x / w.z, w.y / w.z)
        });
        Ok(SyntheticRig {
            ids: scenario.camera_ids(),
            occluders: scenario.all_occluders(),
            scenario,
            seed,
            texture,
            plane_to_texture,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn active(&self, camera: usize, t: usize, pose: &RigPose) -> Vec<ActiveOccluder> {
        self.occluders
            .iter()
            .filter(|o| o.active(t))
            .filter_map(|o| {
                let c = o.position(t);
                let rgb = hsv_to_rgb(o.hue, 150, 140);
                let color = rgb.map(|v| v as f32);
                let hit = match o.shape {
                    OccluderShape::Camera { camera: oc, radius } => {
                        if oc != camera {
                            return None;
                        }
                        Hit::Camera { c, r2: radius * radius }
                    }
                    OccluderShape::World { radius, height } => {
                        let model = self.scenario.rig.camera(pose, camera, self.scenario.width, self.scenario.height);
                        let to_plane = model.plane_to_image(height).try_inverse()?;
                        Hit::World {
                            to_plane,
                            c,
                            r2: radius * radius,
                        }
                    }
                };
                Some(ActiveOccluder { hit, color })
            })
            .collect()
    }

    /// Renders one frame and returns it with the fraction of the camera's
    /// field pixels hidden by occluders.
    pub fn render_frame(&self, camera: usize, t: usize) -> (RgbImage, f64) {
        let s = &self.scenario;
        let pose = s.pose_at(t);
        let g = s.rig.camera(&pose, camera, s.width, s.height).plane_to_image(0.0);
        let to_plane = g.try_inverse().expect("validated pose");
        let to_texture = self.plane_to_texture * to_plane;
        let occluders = self.active(camera, t, &pose);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(camera as u64 ^ mix(t as u64))));
        let mut img = RgbImage::new(s.width, s.height);
        let (mut field, mut hidden) = (0usize, 0usize);
        for y in 0..s.height {
            for x in 0..s.width {
                let (xf, yf) = (x as f64, y as f64);
                let hit = occluders.iter().find(|o| o.covers(xf, yf));
                if !occluders.is_empty() {
                    let w = to_plane * Vector3::new(xf, yf, 1.0);
                    if w.z != 0.0 && s.field.contains(w.x / w.z, w.y / w.z) {
                        field += 1;
                        hidden += hit.is_some() as usize;
                    }
                }
                let color = match hit {
                    Some(o) => o.color,
                    None => {
                        let q = to_texture * Vector3::new(xf, yf, 1.0);
                        self.texture.sample(q.x / q.z, q.y / q.z)
                    }
                };
                let mut px = [0u8; 3];
                for (p, c) in px.iter_mut().zip(color) {
                    let n: f64 = if s.noise > 0.0 {
                        StandardNormal.sample(&mut rng)
                    } else {
                        0.0
                    };
                    *p = (c as f64 + s.noise * n).round().clamp(0.0, 255.0) as u8;
                }
                img.put_pixel(x, y, Rgb(px));
            }
        }
        let coverage = if field == 0 { 0.0 } else { hidden as f64 / field as f64 };
        (img, coverage)
    }

    /// Fraction of the camera's field hidden at frame `t`, computed from the
    /// geometry alone.
    pub fn coverage(&self, camera: usize, t: usize) -> f64 {
        let s = &self.scenario;
        let pose = s.pose_at(t);
        let occluders = self.active(camera, t, &pose);
        if occluders.is_empty() {
            return 0.0;
        }
        let (pixels, _) = s.field_pixels(camera, &pose);
        if pixels.is_empty() {
            return 0.0;
        }
        let hidden = pixels
            .iter()
            .filter(|p| occluders.iter().any(|o| o.covers(p[0], p[1])))
            .count();
        hidden as f64 / pixels.len() as f64
    }

    /// Ground truth without the per-frame coverage table.
    pub fn ground_truth(&self) -> GroundTruth {
        let s = &self.scenario;
        let mut segments = Vec::new();
        for k in 0..=s.rig_moves.len() {
            let start = if k == 0 { 1 } else { s.rig_moves[k - 1].frame + 1 };
            let settled = if k == 0 {
                1
            } else {
                s.rig_moves[k - 1].frame + s.rig_moves[k - 1].transition
            };
            let end = s.rig_moves.get(k).map(|m| m.frame).unwrap_or(s.duration);
            let pose = s.segment_pose(k);
            segments.push(TruthSegment {
                start,
                end,
                settled,
                pose,
                to_reference: s
                    .true_atlas(&pose)
                    .iter()
                    .map(|m| {
                        let mut a = [0.0; 9];
                        for (i, v) in a.iter_mut().enumerate() {
                            *v = m[(i / 3, i % 3)];
                        }
                        a
                    })
                    .collect(),
            });
        }
        GroundTruth {
            seed: self.seed,
            fps: s.fps,
            frame_count: s.duration,
            camera_ids: self.ids.clone(),
            reference: self.ids[s.reference].clone(),
            moves: s.rig_moves.iter().map(|m| m.frame).collect(),
            segments,
            coverage: Vec::new(),
        }
    }
}

impl FrameSource for SyntheticRig {
    fn camera_ids(&self) -> &[String] {
        &self.ids
    }

    fn reference_index(&self) -> usize {
        self.scenario.reference
    }

    fn frame_count(&self) -> usize {
        self.scenario.duration
    }

    fn fps(&self) -> f64 {
        self.scenario.fps
    }

    fn dimensions(&self) -> Result<(u32, u32)> {
        Ok((self.scenario.width, self.scenario.height))
    }

    fn frame(&self, camera: usize, t: usize) -> Result<RgbImage> {
        if t == 0 || t > self.scenario.duration {
            return Err(Error::FrameOutOfRange {
                index: t,
                count: self.scenario.duration,
            });
        }
        Ok(self.render_frame(camera, t).0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    /// First frame after the move that opened this segment.
    pub start: usize,
    pub end: usize,
    /// First frame at which the rig is at rest in this segment's pose.
    pub settled: usize,
    pub pose: RigPose,
    /// Row-major camera-to-reference homographies, one per camera.
    pub to_reference: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCoverage {
    pub camera: String,
    /// Hidden field fraction per frame; entry `i` is frame `i + 1`.
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub fps: f64,
    pub frame_count: usize,
    pub camera_ids: Vec<String>,
    pub reference: String,
    /// Frames at which each rig move starts.
    pub moves: Vec<usize>,
    pub segments: Vec<TruthSegment>,
    pub coverage: Vec<CameraCoverage>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("ground truth", e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn segment_at(&self, t: usize) -> Option<&TruthSegment> {
        self.segments.iter().find(|s| s.start <= t && t <= s.end)
    }
}

/// Writes every frame as PNG under `out/<camera id>/`, plus `manifest.toml`
/// and `ground_truth.json`. Returns the manifest path and the ground truth.
pub fn render(scenario: &Scenario, seed: u64, out: &Path) -> Result<(PathBuf, GroundTruth)> {
    let rig = SyntheticRig::new(scenario.clone(), seed)?;
    let ids = rig.camera_ids().to_vec();
    let dirs: Vec<PathBuf> = ids.iter().map(|id| out.join(id)).collect();
    for dir in &dirs {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cams = ids.len();
    let mut coverage = vec![Vec::with_capacity(scenario.duration); cams];
    let chunk = 64;
    let mut t0 = 1;
    while t0 <= scenario.duration {
        let t1 = (t0 + chunk - 1).min(scenario.duration);
        let jobs: Vec<(usize, usize)> = (t0..=t1).flat_map(|t| (0..cams).map(move |c| (t, c))).collect();
        let results = crate::parallel::map(jobs, |(t, c)| -> Result<f64> {
            let (img, cov) = rig.render_frame(c, t);
            let path = dirs[c].join(frame_file_name(t));
            img.save(&path)
                .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
            Ok(cov)
        });
        for (i, r) in results.into_iter().enumerate() {
            coverage[i % cams].push(r?);
        }
        t0 = t1 + 1;
    }
    let manifest = Manifest::new(
        ids.iter().cloned().zip(dirs.iter().cloned()).collect(),
        scenario.fps,
        &ids[scenario.reference],
        scenario.duration,
    )?;
    let manifest_path = out.join("manifest.toml");
    manifest.write(&manifest_path)?;
    let mut truth = rig.ground_truth();
    truth.coverage = ids
        .iter()
        .zip(coverage)
        .map(|(id, fractions)| CameraCoverage {
            camera: id.clone(),
            fractions,
        })
        .collect();
    truth.write(&out.join("ground_truth.json"))?;
    Ok((manifest_path, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::synthgen::inject_occluder;

    #[test]
    fn reference_view_matches_texture_before_moves() {
        let mut s = Scenario::new(160, 120, 30.0, 10);
        s.noise = 0.0;
        let rig = SyntheticRig::new(s, 3).unwrap();
        let (img, _) = rig.render_frame(0, 1);
        let (tw, th) = rig.texture.dimensions();
        assert_eq!((tw, th), (320, 280));
        let expected = RgbImage::from_fn(160, 120, |x, y| {
            let c = rig.texture.sample(x as f64, y as f64);
            Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8))
        });
        assert!(psnr(&img, &expected, 100.0).unwrap() >= 40.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = Scenario::new(96, 72, 30.0, 5);
        let a = SyntheticRig::new(s.clone(), 11).unwrap();
        let b = SyntheticRig::new(s, 11).unwrap();
        assert_eq!(a.render_frame(2, 4).0, b.render_frame(2, 4).0);
        assert_ne!(a.render_frame(2, 4).0, a.render_frame(2, 5).0);
    }

    #[test]
    fn coverage_matches_render() {
        let s = Scenario::new(160, 120, 30.0, 20);
        let s = inject_occluder(&s, 1, 0.5, (5, 10));
        let rig = SyntheticRig::new(s, 1).unwrap();
        assert_eq!(rig.coverage(1, 4), 0.0);
        let (_, rendered) = rig.render_frame(1, 6);
        assert!((rendered - 0.5).abs() < 0.02);
        assert_eq!(rendered, rig.coverage(1, 6));
        assert_eq!(rig.coverage(0, 6), 0.0);
    }

    #[test]
    fn world_disc_hides_the_field_in_every_camera() {
        let mut s = Scenario::new(160, 120, 30.0, 20);
        s.occluders.push(Occluder {
            shape: OccluderShape::World {
                radius: 120.0,
                height: 400.0,
            },
            start: 1,
            end: 20,
            from: [0.0, 0.0],
            to: [0.0, 0.0],
            hue: 90,
        });
        let rig = SyntheticRig::new(s, 1).unwrap();
        for c in 0..5 {
            let cov = rig.coverage(c, 3);
            assert!(cov > 0.2 && cov < 1.0, "camera {c}: {cov}");
        }
    }

    #[test]
    fn render_writes_manifest_and_truth() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::new(64, 48, 30.0, 6).with_move(3);
        let (path, truth) = render(&s, 5, dir.path()).unwrap();
        let manifest = crate::ingest::load_manifest(&path).unwrap();
        assert_eq!(manifest.frame_count(), 6);
        assert_eq!(manifest.camera_count(), 5);
        assert_eq!(truth.moves, vec![3]);
        assert_eq!(truth.segments.len(), 2);
        assert_eq!(truth.coverage.len(), 5);
        assert!(truth.coverage.iter().all(|c| c.fractions.len() == 6));
        let back = GroundTruth::read(&dir.path().join("ground_truth.json")).unwrap();
        assert_eq!(back, truth);
        let rig = SyntheticRig::new(s, 5).unwrap();
        let disk = manifest.frame(3, 4).unwrap();
        assert_eq!(disk, rig.frame(3, 4).unwrap());
    }
}
