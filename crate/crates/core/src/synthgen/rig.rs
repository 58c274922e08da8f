use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Placement of the rig head above the plane: center position and height
/// in millimetres, orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigPose {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub yaw: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
}

impl Default for RigPose {
    fn default() -> Self {
        RigPose {
            x: 0.0,
            y: 0.0,
            height: 1000.0,
            yaw: 0.0,
            tilt_x: 0.0,
            tilt_y: 0.0,
        }
    }
}

impl RigPose {
    pub fn lerp(&self, other: &RigPose, s: f64) -> RigPose {
        let l = |a: f64, b: f64| a + (b - a) * s;
        RigPose {
            x: l(self.x, other.x),
            y: l(self.y, other.y),
            height: l(self.height, other.height),
            yaw: l(self.yaw, other.yaw),
            tilt_x: l(self.tilt_x, other.tilt_x),
            tilt_y: l(self.tilt_y, other.tilt_y),
        }
    }
}

/// Cameras evenly spaced on a circle in the rig head, all aimed at the
/// point where the rig axis meets the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigGeometry {
    pub cameras: usize,
    /// Circle radius in millimetres.
    pub radius: f64,
    /// Focal length as a multiple of the image width.
    pub focal: f64,
    /// Extra roll of each camera about its optical axis, in degrees.
    pub rolls: Vec<f64>,
}

impl Default for RigGeometry {
    fn default() -> Self {
        RigGeometry {
            cameras: 5,
            radius: 300.0,
            focal: 1.0,
            rolls: vec![0.0, 6.0, -6.0, 12.0, -12.0],
        }
    }
}

pub(crate) struct CameraModel {
    pub k: Matrix3<f64>,
    /// World-to-camera rotation (rows are the camera axes).
    pub r: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraModel {
    /// Homography from world points `(X, Y)` on the plane `z = h` to pixels.
    pub fn plane_to_image(&self, h: f64) -> Matrix3<f64> {
        let t = -(self.r * (self.center - Vector3::new(0.0, 0.0, h)));
        let c0 = self.r.column(0);
        let c1 = self.r.column(1);
        let m = Matrix3::from_columns(&[c0.into(), c1.into(), t]);
        self.k * m
    }
}

impl RigGeometry {
    pub(crate) fn camera(&self, pose: &RigPose, index: usize, width: u32, height: u32) -> CameraModel {
        let rig = Rotation3::from_axis_angle(&Vector3::z_axis(), pose.yaw.to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), pose.tilt_x.to_radians())
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pose.tilt_y.to_radians());
        let hub = Vector3::new(pose.x, pose.y, pose.height);
        let n = self.cameras.max(1) as f64;
        let theta = std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * index as f64 / n;
        let offset = if self.cameras > 1 {
            Vector3::new(self.radius * theta.cos(), self.radius * theta.sin(), 0.0)
        } else {
            Vector3::zeros()
        };
        let center = hub + rig * offset;
        let axis = rig * Vector3::new(0.0, 0.0, -1.0);
        let target = hub + axis * (pose.height / -axis.z);
        let z = (target - center).normalize();
        let up = rig * Vector3::new(0.0, 1.0, 0.0);
        let y0 = -up;
        let y = (y0 - z * y0.dot(&z)).normalize();
        let x = y.cross(&z);
        let roll = self.rolls.get(index).copied().unwrap_or(0.0).to_radians();
        let (s, c) = roll.sin_cos();
        let xr = x * c + y * s;
        let yr = y * c - x * s;
        let r = Matrix3::from_rows(&[xr.transpose(), yr.transpose(), z.transpose()]);
        let f = self.focal * width as f64;
        let k = Matrix3::new(f, 0.0, width as f64 / 2.0, 0.0, f, height as f64 / 2.0, 0.0, 0.0, 1.0);
        CameraModel { k, r, center }
    }
}
