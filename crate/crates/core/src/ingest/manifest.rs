use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::FrameSource;
use crate::error::{Error, Result};

/// On-disk layout of the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default = "default_fps")]
    fps: f64,
    reference: String,
    frames: usize,
    cameras: Vec<CameraEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraEntry {
    id: String,
    dir: PathBuf,
}

fn default_fps() -> f64 {
    30.0
}

/// Synchronized multi-camera recording: one directory of numbered PNG
/// frames (`000001.png`, ...) per camera.
#[derive(Debug)]
pub struct Manifest {
    camera_ids: Vec<String>,
    frame_dirs: Vec<PathBuf>,
    fps: f64,
    reference: usize,
    frame_count: usize,
    dims: OnceLock<(u32, u32)>,
}

impl Clone for Manifest {
    fn clone(&self) -> Self {
        let dims = OnceLock::new();
        if let Some(d) = self.dims.get() {
            let _ = dims.set(*d);
        }
        Manifest {
            camera_ids: self.camera_ids.clone(),
            frame_dirs: self.frame_dirs.clone(),
            fps: self.fps,
            reference: self.reference,
            frame_count: self.frame_count,
            dims,
        }
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

impl Manifest {
    /// Builds a manifest from parts, checking the identifier invariants but
    /// not touching the file system.
    pub fn new(
        cameras: Vec<(String, PathBuf)>,
        fps: f64,
        reference: &str,
        frame_count: usize,
    ) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(Error::TooFewCameras(cameras.len()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidParameter(format!("fps must be positive, got {fps}")));
        }
        if frame_count == 0 {
            return Err(Error::InvalidParameter("frame count must be positive".into()));
        }
        let mut seen = HashSet::new();
        for (id, _) in &cameras {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateCamera(id.clone()));
            }
        }
        let reference = cameras
            .iter()
            .position(|(id, _)| id == reference)
            .ok_or_else(|| Error::UnknownReference(reference.to_string()))?;
        let (camera_ids, frame_dirs) = cameras.into_iter().unzip();
        Ok(Manifest {
            camera_ids,
            frame_dirs,
            fps,
            reference,
            frame_count,
            dims: OnceLock::new(),
        })
    }

    pub fn frame_dirs(&self) -> &[PathBuf] {
        &self.frame_dirs
    }

    pub fn reference_camera(&self) -> &str {
        &self.camera_ids[self.reference]
    }

    pub fn frame_path(&self, camera: usize, t: usize) -> PathBuf {
        self.frame_dirs[camera].join(frame_file_name(t))
    }

    /// Checks that every camera directory exists and holds exactly the
    /// frames `1..=frame_count`.
    pub fn validate_frames(&self) -> Result<()> {
        for (id, dir) in self.camera_ids.iter().zip(&self.frame_dirs) {
            if !dir.is_dir() {
                return Err(Error::MissingDirectory {
                    camera: id.clone(),
                    path: dir.clone(),
                });
            }
            let mut indices = Vec::new();
            for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
                let entry = entry.map_err(|e| Error::io(dir, e))?;
                let name = entry.file_name();
                let Some(name) = name.to_str() else { continue };
                if let Some(stem) = name.strip_suffix(".png") {
                    if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
                        indices.push(stem.parse::<usize>().unwrap_or(0));
                    }
                }
            }
            let in_range = indices
                .iter()
                .filter(|&&i| i >= 1 && i <= self.frame_count)
                .count();
            if indices.len() != self.frame_count || in_range != self.frame_count {
                return Err(Error::FrameCountMismatch {
                    camera: id.clone(),
                    expected: self.frame_count,
                    found: indices.len(),
                });
            }
        }
        Ok(())
    }

    /// Writes the manifest as TOML. Frame directories are stored relative to
    /// the manifest's parent directory when possible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let file = ManifestFile {
            fps: self.fps,
            reference: self.reference_camera().to_string(),
            frames: self.frame_count,
            cameras: self
                .camera_ids
                .iter()
                .zip(&self.frame_dirs)
                .map(|(id, dir)| CameraEntry {
                    id: id.clone(),
                    dir: dir.strip_prefix(base).unwrap_or(dir).to_path_buf(),
                })
                .collect(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::parse("manifest", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Manifest> {
    let file: ManifestFile = toml::from_str(text).map_err(|e| Error::parse("manifest", e))?;
    let cameras = file
        .cameras
        .into_iter()
        .map(|c| (c.id, base.join(c.dir)))
        .collect();
    Manifest::new(cameras, file.fps, &file.reference, file.frames)
}

/// Reads and validates a manifest. Relative frame directories resolve
/// against the manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = parse_manifest(&text, base)?;
    manifest.validate_frames()?;
    Ok(manifest)
}

impl FrameSource for Manifest {
    fn camera_ids(&self) -> &[String] {
        &self.camera_ids
    }

    fn reference_index(&self) -> usize {
        self.reference
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn fps(&self) -> f64 {
        self.fps
    }

    fn dimensions(&self) -> Result<(u32, u32)> {
        if let Some(d) = self.dims.get() {
            return Ok(*d);
        }
        let path = self.frame_path(self.reference, 1);
        let d = image::image_dimensions(&path).map_err(|e| Error::Decode {
            camera: self.reference_camera().to_string(),
            index: 1,
            message: e.to_string(),
        })?;
        let _ = self.dims.set(d);
        Ok(d)
    }

    fn frame(&self, camera: usize, t: usize) -> Result<RgbImage> {
        if t == 0 || t > self.frame_count {
            return Err(Error::FrameOutOfRange {
                index: t,
                count: self.frame_count,
            });
        }
        let path = self.frame_path(camera, t);
        let img = image::open(&path).map_err(|e| Error::Decode {
            camera: self.camera_ids[camera].clone(),
            index: t,
            message: e.to_string(),
        })?;
        Ok(img.into_rgb8())
    }
}
