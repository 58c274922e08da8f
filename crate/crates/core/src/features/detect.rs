//! Harris corners with quadratic sub-pixel refinement, described by a
//! rotation-steered binary intensity-comparison descriptor.

use std::sync::OnceLock;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{gaussian_kernel, separable_filter, Plane};

pub const DESCRIPTOR_BITS: usize = 256;
const DESCRIPTOR_WORDS: usize = DESCRIPTOR_BITS / 64;
/// Radius of the sampling disc used for orientation and the descriptor.
const PATCH_RADIUS: i32 = 15;
const BORDER: usize = PATCH_RADIUS as usize + 2;
const HARRIS_K: f32 = 0.04;
const WINDOW_SIGMA: f32 = 1.5;
const DESCRIPTOR_SIGMA: f32 = 2.0;
const NMS_RADIUS: usize = 2;
/// Minimum Harris response, in (intensity / pixel)^4 units. Sensor noise of
/// a few grey levels stays two orders of magnitude below this.
const MIN_RESPONSE: f32 = 100.0;
const RELATIVE_RESPONSE: f32 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u64; DESCRIPTOR_WORDS]);

impl Descriptor {
    #[inline]
    pub fn distance(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Sub-pixel position; pixel centres sit on integer coordinates.
    pub x: f32,
    pub y: f32,
    pub response: f32,
    /// Patch orientation in radians.
    pub angle: f32,
    pub descriptor: Descriptor,
}

/// Harris corner response map (`det - k * trace^2` of the smoothed
/// structure tensor).
pub fn harris_response(gray: &Plane) -> Plane {
    let (w, h) = (gray.width, gray.height);
    let mut ixx = Plane::new(w, h);
    let mut iyy = Plane::new(w, h);
    let mut ixy = Plane::new(w, h);
    if w < 3 || h < 3 {
        return Plane::new(w, h);
    }
    let d = &gray.data;
    for y in 1..h - 1 {
        let (up, mid, down) = (&d[(y - 1) * w..y * w], &d[y * w..(y + 1) * w], &d[(y + 1) * w..(y + 2) * w]);
        for x in 1..w - 1 {
            let gx = (up[x + 1] + 2.0 * mid[x + 1] + down[x + 1] - up[x - 1] - 2.0 * mid[x - 1] - down[x - 1]) / 8.0;
            let gy = (down[x - 1] + 2.0 * down[x] + down[x + 1] - up[x - 1] - 2.0 * up[x] - up[x + 1]) / 8.0;
            let i = y * w + x;
            ixx.data[i] = gx * gx;
            iyy.data[i] = gy * gy;
            ixy.data[i] = gx * gy;
        }
    }
    let radius = (3.0 * WINDOW_SIGMA).ceil() as usize;
    let kernel = gaussian_kernel(2 * radius + 1, WINDOW_SIGMA);
    let sxx = separable_filter(&ixx, &kernel);
    let syy = separable_filter(&iyy, &kernel);
    let sxy = separable_filter(&ixy, &kernel);
    let mut r = Plane::new(w, h);
    for i in 0..w * h {
        let (a, b, c) = (sxx.data[i], syy.data[i], sxy.data[i]);
        let tr = a + b;
        r.data[i] = a * b - c * c - HARRIS_K * tr * tr;
    }
    r
}

fn is_local_max(r: &Plane, x: usize, y: usize) -> bool {
    let v = r.at(x, y);
    let idx = y * r.width + x;
    for yy in y - NMS_RADIUS..=y + NMS_RADIUS {
        for xx in x - NMS_RADIUS..=x + NMS_RADIUS {
            let o = r.at(xx, yy);
            let oidx = yy * r.width + xx;
            // Ties resolve to the lowest index so plateaus yield one point.
            if o > v || (o == v && oidx < idx) {
                return false;
            }
        }
    }
    true
}

/// Offset of the extremum of the quadratic through a 3x3 neighbourhood.
fn subpixel_offset(r: &Plane, x: usize, y: usize) -> (f32, f32) {
    let c = r.at(x, y);
    let dx = (r.at(x + 1, y) - r.at(x - 1, y)) / 2.0;
    let dy = (r.at(x, y + 1) - r.at(x, y - 1)) / 2.0;
    let dxx = r.at(x + 1, y) - 2.0 * c + r.at(x - 1, y);
    let dyy = r.at(x, y + 1) - 2.0 * c + r.at(x, y - 1);
    let dxy = (r.at(x + 1, y + 1) - r.at(x - 1, y + 1) - r.at(x + 1, y - 1) + r.at(x - 1, y - 1))
        / 4.0;
    let det = dxx * dyy - dxy * dxy;
    if det.abs() < f32::EPSILON * c.abs().max(1.0) {
        return (0.0, 0.0);
    }
    let ox = -(dyy * dx - dxy * dy) / det;
    let oy = -(dxx * dy - dxy * dx) / det;
    if ox.abs() > 1.0 || oy.abs() > 1.0 {
        (0.0, 0.0)
    } else {
        (ox.clamp(-0.5, 0.5), oy.clamp(-0.5, 0.5))
    }
}

/// Sampling pattern: pairs of offsets inside the patch disc.
fn pattern() -> &'static [[(f32, f32); 2]; DESCRIPTOR_BITS] {
    static PATTERN: OnceLock<[[(f32, f32); 2]; DESCRIPTOR_BITS]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b51_d35c);
        let sigma = (2 * PATCH_RADIUS + 1) as f32 / 5.0;
        let limit = (PATCH_RADIUS - 1) as f32;
        let mut point = || loop {
            // Box-Muller keeps the pattern independent of rand_distr versions.
            let u1: f32 = rng.random_range(f32::EPSILON..1.0);
            let u2: f32 = rng.random();
            let mag = sigma * (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f32::consts::PI * u2).sin_cos();
            let (x, y) = (mag * c, mag * s);
            if x * x + y * y <= limit * limit {
                return (x, y);
            }
        };
        let mut out = [[(0.0, 0.0); 2]; DESCRIPTOR_BITS];
        for pair in out.iter_mut() {
            *pair = [point(), point()];
        }
        out
    })
}

/// Orientation from the intensity centroid of the patch disc.
fn orientation(smooth: &Plane, x: f32, y: f32) -> f32 {
    let (cx, cy) = (x.round() as i32, y.round() as i32);
    let mut m10 = 0.0f32;
    let mut m01 = 0.0f32;
    let r2 = PATCH_RADIUS * PATCH_RADIUS;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        let half = ((r2 - dy * dy) as f32).sqrt() as i32;
        let row = (cy + dy) as usize * smooth.width;
        let span = &smooth.data[row + (cx - half) as usize..=row + (cx + half) as usize];
        let mut sum = 0.0f32;
        for (dx, &v) in (-half..=half).zip(span) {
            m10 += dx as f32 * v;
            sum += v;
        }
        m01 += dy as f32 * sum;
    }
    m01.atan2(m10)
}

/// Bilinear sample for points known to lie at least one pixel inside.
#[inline]
fn sample_inside(p: &Plane, x: f32, y: f32) -> f32 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let i = y0 as usize * p.width + x0 as usize;
    let d = &p.data[i..i + p.width + 2];
    let top = d[0] + (d[1] - d[0]) * fx;
    let bottom = d[p.width] + (d[p.width + 1] - d[p.width]) * fx;
    top + (bottom - top) * fy
}

fn describe(smooth: &Plane, x: f32, y: f32, angle: f32) -> Descriptor {
    let (s, c) = angle.sin_cos();
    let mut words = [0u64; DESCRIPTOR_WORDS];
    for (bit, [(ax, ay), (bx, by)]) in pattern().iter().enumerate() {
        let pa = sample_inside(smooth, x + c * ax - s * ay, y + s * ax + c * ay);
        let pb = sample_inside(smooth, x + c * bx - s * by, y + s * bx + c * by);
        if pa < pb {
            words[bit / 64] |= 1 << (bit % 64);
        }
    }
    Descriptor(words)
}

/// Detects up to `max_points` keypoints, strongest first.
pub fn detect(image: &RgbImage, max_points: usize) -> Vec<Keypoint> {
    detect_gray(&Plane::from_rgb(image), max_points)
}

pub fn detect_gray(gray: &Plane, max_points: usize) -> Vec<Keypoint> {
    let (w, h) = (gray.width, gray.height);
    if max_points == 0 || w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let r = harris_response(gray);
    let max_r = r.data.iter().cloned().fold(0.0f32, f32::max);
    let floor = MIN_RESPONSE.max(RELATIVE_RESPONSE * max_r);
    let mut candidates = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let v = r.at(x, y);
            if v > floor && is_local_max(&r, x, y) {
                candidates.push((v, x, y));
            }
        }
    }
    // Strongest first; position breaks ties deterministically.
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.2.cmp(&b.2))
            .then(a.1.cmp(&b.1))
    });
    candidates.truncate(max_points);

    let smooth = gray.gaussian_blur(DESCRIPTOR_SIGMA);
    candidates
        .into_iter()
        .map(|(response, x, y)| {
            let (ox, oy) = subpixel_offset(&r, x, y);
            let (fx, fy) = (x as f32 + ox, y as f32 + oy);
            let angle = orientation(&smooth, fx, fy);
            Keypoint {
                x: fx,
                y: fy,
                response,
                angle,
                descriptor: describe(&smooth, fx, fy, angle),
            }
        })
        .collect()
}
