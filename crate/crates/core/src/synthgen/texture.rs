use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::hsv_to_rgb;
use crate::raster::Plane;

pub(crate) const FIELD_HUE: u8 = 14;
pub(crate) const BACKGROUND_HUE: u8 = 102;

/// Procedural plane texture in reference-camera pixel coordinates, padded by
/// `margin` on every side so that other views can sample it too.
pub(crate) struct Texture {
    width: usize,
    height: usize,
    margin: f64,
    texels: Vec<[f32; 3]>,
}

impl Texture {
    /// Random overlapping rectangles of varied brightness and saturation.
    /// Hue comes from the region: skin-like inside the field, cyan outside.
    pub fn generate(
        view_width: u32,
        view_height: u32,
        margin: u32,
        seed: u64,
        in_field: impl Fn(f64, f64) -> bool,
    ) -> Texture {
        let width = (view_width + 2 * margin) as usize;
        let height = (view_height + 2 * margin) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_u64);
        let n = width * height;
        let mut val = vec![128u8; n];
        let mut sat = vec![160u8; n];
        let mut jitter = vec![0i8; n];
        let scale = view_width.max(view_height) as f64;
        let (smin, smax) = ((scale / 80.0).max(3.0), (scale / 16.0).max(6.0));
        let mean_side = (smin + smax) / 2.0;
        let blocks = (1.6 * n as f64 / (mean_side * mean_side)) as usize;
        for _ in 0..blocks {
            let bw = rng.random_range(smin..smax) as usize;
            let bh = rng.random_range(smin..smax) as usize;
            let x0 = rng.random_range(0..width);
            let y0 = rng.random_range(0..height);
            let v = rng.random_range(60..=235u8);
            let s = rng.random_range(110..=230u8);
            let j = rng.random_range(-7..=7i8);
            for y in y0..(y0 + bh).min(height) {
                for x in x0..(x0 + bw).min(width) {
                    let i = y * width + x;
                    val[i] = v;
                    sat[i] = s;
                    jitter[i] = j;
                }
            }
        }
        let mut channels = [Plane::new(width, height), Plane::new(width, height), Plane::new(width, height)];
        let m = margin as f64;
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let base = if in_field(x as f64 - m, y as f64 - m) {
                    FIELD_HUE
                } else {
                    BACKGROUND_HUE
                };
                let hue = (base as i16 + jitter[i] as i16) as u8;
                let rgb = hsv_to_rgb(hue, sat[i], val[i]);
                for (c, plane) in channels.iter_mut().enumerate() {
                    plane.data[i] = rgb[c] as f32;
                }
            }
        }
        let [r, g, b] = channels.map(|p| p.gaussian_blur(0.7));
        let texels = (0..n).map(|i| [r.data[i], g.data[i], b.data[i]]).collect();
        Texture {
            width,
            height,
            margin: m,
            texels,
        }
    }

    /// Bilinear sample at reference-view coordinates, clamped at the border.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> [f32; 3] {
        let x = (u + self.margin).clamp(0.0, (self.width - 1) as f64);
        let y = (v + self.margin).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let row0 = &self.texels[y0 * self.width..(y0 + 1) * self.width];
        let row1 = &self.texels[y1 * self.width..(y1 + 1) * self.width];
        let (a, b, c, d) = (row0[x0], row0[x1], row1[x0], row1[x1]);
        let mut out = [0.0f32; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            *o = top + (bottom - top) * fy;
        }
        out
    }

    #[cfg(test)]
    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}
