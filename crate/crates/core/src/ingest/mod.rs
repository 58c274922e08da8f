//! Loading synchronized multi-camera frames and colour-space utilities.

mod hsv;
mod manifest;

pub use hsv::{hsv_to_rgb, rgb_to_hsv, to_hsv, HsvImage};
pub use manifest::{frame_file_name, load_manifest, parse_manifest, Manifest};

use image::RgbImage;

use crate::error::{Error, Result};

/// The `N_cam` synchronized images at one (1-based) frame index.
#[derive(Debug, Clone)]
pub struct FrameStack {
    pub t: usize,
    pub images: Vec<RgbImage>,
}

impl FrameStack {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.images.first().map(|i| i.dimensions()).unwrap_or((0, 0))
    }
}

/// Random access to synchronized frames. Implemented by [`Manifest`] for
/// recordings on disk and by the synthetic rig simulator.
pub trait FrameSource: Sync {
    fn camera_ids(&self) -> &[String];

    /// Index into [`FrameSource::camera_ids`] of the reference camera.
    fn reference_index(&self) -> usize;

    fn frame_count(&self) -> usize;

    fn fps(&self) -> f64;

    fn dimensions(&self) -> Result<(u32, u32)>;

    /// Decodes one camera's frame; `t` is 1-based.
    fn frame(&self, camera: usize, t: usize) -> Result<RgbImage>;

    fn camera_count(&self) -> usize {
        self.camera_ids().len()
    }
}

/// Loads all camera images for frame `t` (1-based).
pub fn frame_stack<S: FrameSource + ?Sized>(source: &S, t: usize) -> Result<FrameStack> {
    let count = source.frame_count();
    if t == 0 || t > count {
        return Err(Error::FrameOutOfRange { index: t, count });
    }
    let images = (0..source.camera_count())
        .map(|c| source.frame(c, t))
        .collect::<Result<Vec<_>>>()?;
    let dims = images[0].dimensions();
    if let Some((c, img)) = images.iter().enumerate().find(|(_, i)| i.dimensions() != dims) {
        return Err(Error::DimensionMismatch(format!(
            "camera {:?} frame {t} is {:?}, expected {:?}",
            source.camera_ids()[c],
            img.dimensions(),
            dims
        )));
    }
    Ok(FrameStack { t, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use std::fs;
    use std::path::Path;

    fn write_camera(dir: &Path, frames: usize, size: u32) {
        fs::create_dir_all(dir).unwrap();
        for t in 1..=frames {
            let img = RgbImage::from_pixel(size, size, Rgb([t as u8, 0, 0]));
            img.save(dir.join(frame_file_name(t))).unwrap();
        }
    }

    fn write_manifest(root: &Path, cams: &[&str], reference: &str, frames: usize) -> std::path::PathBuf {
        let mut text = format!("fps = 30.0\nreference = \"{reference}\"\nframes = {frames}\n");
        for c in cams {
            text.push_str(&format!("[[cameras]]\nid = \"{c}\"\ndir = \"{c}\"\n"));
        }
        let path = root.join("manifest.toml");
        fs::write(&path, text).unwrap();
        path
    }

    const CAMS: [&str; 5] = ["cam1", "cam2", "cam3", "cam4", "cam5"];

    #[test]
    fn loads_five_camera_manifest() {
        let dir = tempfile::tempdir().unwrap();
        for c in CAMS {
            write_camera(&dir.path().join(c), 1800, 1);
        }
        let path = write_manifest(dir.path(), &CAMS, "cam1", 1800);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.camera_count(), 5);
        assert_eq!(m.frame_count(), 1800);
        assert_eq!(m.reference_camera(), "cam1");

        let first = frame_stack(&m, 1).unwrap();
        assert_eq!(first.len(), 5);
        let last = frame_stack(&m, 1800).unwrap();
        assert_eq!(last.t, 1800);
        assert_eq!(last.images[2].get_pixel(0, 0)[0], (1800 % 256) as u8);
        assert!(matches!(
            frame_stack(&m, 0),
            Err(Error::FrameOutOfRange { index: 0, .. })
        ));
        assert!(frame_stack(&m, 1801).is_err());
    }

    #[test]
    fn frame_count_mismatch_names_camera() {
        let dir = tempfile::tempdir().unwrap();
        for (i, c) in CAMS.iter().enumerate() {
            write_camera(&dir.path().join(c), if i == 2 { 9 } else { 10 }, 2);
        }
        let path = write_manifest(dir.path(), &CAMS, "cam1", 10);
        let err = load_manifest(&path).unwrap_err();
        match &err {
            Error::FrameCountMismatch { camera, found, .. } => {
                assert_eq!(camera, "cam3");
                assert_eq!(*found, 9);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(err.to_string().contains("frame count mismatch"));
    }

    #[test]
    fn unknown_reference() {
        let dir = tempfile::tempdir().unwrap();
        for c in CAMS {
            write_camera(&dir.path().join(c), 2, 2);
        }
        let path = write_manifest(dir.path(), &CAMS, "cam9", 2);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::UnknownReference(ref r) if r == "cam9"));
        assert!(err.to_string().contains("unknown reference"));
    }

    #[test]
    fn missing_directory_names_camera() {
        let dir = tempfile::tempdir().unwrap();
        write_camera(&dir.path().join("cam1"), 2, 2);
        let path = write_manifest(dir.path(), &["cam1", "cam2"], "cam1", 2);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::MissingDirectory { ref camera, .. } if camera == "cam2"));
    }

    #[test]
    fn single_camera_rejected() {
        let err = Manifest::new(vec![("a".into(), "a".into())], 30.0, "a", 1).unwrap_err();
        assert!(matches!(err, Error::TooFewCameras(1)));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(
            vec![
                ("left".into(), dir.path().join("left")),
                ("right".into(), dir.path().join("right")),
            ],
            25.0,
            "right",
            7,
        )
        .unwrap();
        let path = dir.path().join("m.toml");
        m.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let back = parse_manifest(&text, dir.path()).unwrap();
        assert_eq!(back.camera_ids(), m.camera_ids());
        assert_eq!(back.frame_dirs(), m.frame_dirs());
        assert_eq!(back.reference_index(), 1);
        assert_eq!(back.fps(), 25.0);
        assert_eq!(back.frame_count(), 7);
    }
}
