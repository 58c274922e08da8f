//! Output frames and the optional visibility aids: recentering the field
//! and filling pixels left empty by warping or shifting.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{Canvas, Warped};
use crate::raster::{gaussian_kernel, separable_filter, Mask, Plane};

/// Where an output pixel came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Selected,
    CrossView,
    Temporal,
    None,
}

impl Provenance {
    /// Gray level used when the provenance mask is written as an image.
    pub fn level(self) -> u8 {
        match self {
            Provenance::Selected => 255,
            Provenance::CrossView => 170,
            Provenance::Temporal => 85,
            Provenance::None => 0,
        }
    }
}

/// The selected view on the enlarged canvas, kept so centering can pull in
/// content from outside the output window.
#[derive(Debug, Clone, PartialEq)]
pub struct WideView {
    pub image: RgbImage,
    pub validity: Mask,
    pub origin: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub t: usize,
    pub image: RgbImage,
    pub validity: Mask,
    pub source_camera: usize,
    pub atlas_id: usize,
    pub stale: bool,
    pub shift: (i32, i32),
    pub provenance: Vec<Provenance>,
    pub wide: Option<WideView>,
}

fn provenance_from(validity: &Mask) -> Vec<Provenance> {
    validity
        .as_slice()
        .iter()
        .map(|&v| if v { Provenance::Selected } else { Provenance::None })
        .collect()
}

fn crop(image: &RgbImage, validity: &Mask, x0: i64, y0: i64, width: u32, height: u32) -> (RgbImage, Mask) {
    let mut out = RgbImage::new(width, height);
    let mut valid = Mask::new(width, height, false);
    let (sw, sh) = (image.width() as i64, image.height() as i64);
    for v in 0..height {
        let sy = y0 + v as i64;
        if sy < 0 || sy >= sh {
            continue;
        }
        for u in 0..width {
            let sx = x0 + u as i64;
            if sx < 0 || sx >= sw || !validity.get(sx as u32, sy as u32) {
                continue;
            }
            out.put_pixel(u, v, *image.get_pixel(sx as u32, sy as u32));
            valid.set(u, v, true);
        }
    }
    (out, valid)
}

impl RenderedFrame {
    /// Wraps a warp result. On an enlarged canvas the output window is the
    /// reference-sized region at the canvas origin.
    pub fn from_warped(
        t: usize,
        warped: Warped,
        canvas: &Canvas,
        size: (u32, u32),
        source_camera: usize,
        atlas_id: usize,
        stale: bool,
    ) -> Self {
        let (w, h) = size;
        let (image, validity, wide) = if (canvas.width, canvas.height) == size && canvas.origin_x == 0 && canvas.origin_y == 0 {
            (warped.image, warped.valid, None)
        } else {
            let (img, valid) = crop(&warped.image, &warped.valid, canvas.origin_x as i64, canvas.origin_y as i64, w, h);
            let wide = WideView {
                image: warped.image,
                validity: warped.valid,
                origin: (canvas.origin_x as u32, canvas.origin_y as u32),
            };
            (img, valid, Some(wide))
        };
        let provenance = provenance_from(&validity);
        RenderedFrame {
            t,
            image,
            validity,
            source_camera,
            atlas_id,
            stale,
            shift: (0, 0),
            provenance,
            wide,
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.image.dimensions()
    }

    fn with_content(
        &self,
        image: RgbImage,
        validity: Mask,
        provenance: Vec<Provenance>,
        shift: (i32, i32),
        wide: Option<WideView>,
    ) -> RenderedFrame {
        RenderedFrame {
            t: self.t,
            image,
            validity,
            source_camera: self.source_camera,
            atlas_id: self.atlas_id,
            stale: self.stale,
            shift,
            provenance,
            wide,
        }
    }

    pub fn provenance_image(&self) -> image::GrayImage {
        let (w, h) = self.dimensions();
        image::GrayImage::from_fn(w, h, |x, y| image::Luma([self.provenance[(y * w + x) as usize].level()]))
    }
}

/// Exponential average of the offset moving the field centroid to the
/// frame center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterTracker {
    pub alpha: f64,
    pub width: u32,
    pub height: u32,
    state: (f64, f64),
}

impl CenterTracker {
    pub fn new(width: u32, height: u32, alpha: f64) -> Self {
        CenterTracker {
            alpha,
            width,
            height,
            state: (0.0, 0.0),
        }
    }

    /// Feeds one frame's centroid (if the field is visible) and returns the
    /// smoothed offset.
    pub fn update(&mut self, centroid: Option<(f64, f64)>) -> (f64, f64) {
        if let Some((cx, cy)) = centroid {
            let target = (self.width as f64 / 2.0 - cx, self.height as f64 / 2.0 - cy);
            let a = self.alpha;
            self.state = ((1.0 - a) * self.state.0 + a * target.0, (1.0 - a) * self.state.1 + a * target.1);
        }
        self.state
    }

    /// Integer shift actually applied, bounded by half the frame size.
    pub fn pixel_offset(&self) -> (i32, i32) {
        let hx = (self.width / 2) as f64;
        let hy = (self.height / 2) as f64;
        (
            self.state.0.clamp(-hx, hx).round() as i32,
            self.state.1.clamp(-hy, hy).round() as i32,
        )
    }
}

/// Offsets for a whole sequence of field centroids.
pub fn centering_offsets(centroids: &[Option<(f64, f64)>], width: u32, height: u32, alpha: f64) -> Vec<(f64, f64)> {
    let mut tracker = CenterTracker::new(width, height, alpha);
    centroids.iter().map(|&c| tracker.update(c)).collect()
}

/// Moves content by `offset`; output pixel `(u, v)` shows source pixel
/// `(u - dx, v - dy)`. Content comes from the wide view when present, so
/// only areas the selected camera never saw become invalid.
pub fn apply_centering(frame: &RenderedFrame, offset: (i32, i32)) -> RenderedFrame {
    let (w, h) = frame.dimensions();
    let shift = (frame.shift.0 + offset.0, frame.shift.1 + offset.1);
    let (image, validity) = match &frame.wide {
        // The wide view is unshifted, so crop it at the accumulated shift.
        Some(wide) => crop(
            &wide.image,
            &wide.validity,
            wide.origin.0 as i64 - shift.0 as i64,
            wide.origin.1 as i64 - shift.1 as i64,
            w,
            h,
        ),
        None => crop(&frame.image, &frame.validity, -offset.0 as i64, -offset.1 as i64, w, h),
    };
    let provenance = provenance_from(&validity);
    frame.with_content(image, validity, provenance, shift, frame.wide.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillParams {
    /// Gaussian kernel size for the alpha mask, in pixels (odd).
    pub kernel: usize,
    /// Pixels whose largest channel is at most this count as missing.
    pub threshold: u8,
    /// Frames of staleness per pixel of temporal blur radius.
    pub frames_per_radius: u32,
    pub max_radius: u32,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams {
            kernel: 49,
            threshold: 10,
            frames_per_radius: 10,
            max_radius: 25,
        }
    }
}

/// Previous completed frame and, per pixel, the frames since it was last
/// directly observed.
#[derive(Debug, Clone, PartialEq)]
pub struct FillHistory {
    pub image: RgbImage,
    pub valid: Mask,
    pub age: Vec<u32>,
}

/// Blending weight of the frame against the reference view: the blurred
/// binary mask of present pixels, forced to zero on missing pixels.
pub fn alpha_mask(frame: &RenderedFrame, params: &FillParams) -> Vec<f32> {
    let (w, h) = frame.dimensions();
    let present: Vec<bool> = frame
        .image
        .pixels()
        .zip(frame.validity.as_slice())
        .map(|(p, &v)| v && p.0.iter().any(|&c| c > params.threshold))
        .collect();
    if present.iter().all(|&p| p) {
        return vec![1.0; present.len()];
    }
    let mut plane = Plane::new(w as usize, h as usize);
    for (d, &p) in plane.data.iter_mut().zip(&present) {
        *d = if p { 1.0 } else { 0.0 };
    }
    let kernel = params.kernel | 1;
    let blurred = separable_filter(&plane, &gaussian_kernel(kernel, kernel as f32 / 6.0));
    blurred
        .data
        .iter()
        .zip(&present)
        .map(|(&a, &p)| {
            if !p {
                0.0
            } else if a >= 1.0 - 1e-5 {
                1.0
            } else {
                a.clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Summed-area tables of validity-weighted colour, for box means.
struct Integral {
    width: usize,
    sums: Vec<[u64; 4]>,
}

impl Integral {
    fn new(image: &RgbImage, valid: &Mask) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let stride = w + 1;
        let mut sums = vec![[0u64; 4]; stride * (h + 1)];
        for y in 0..h {
            let mut row = [0u64; 4];
            for x in 0..w {
                if valid.get(x as u32, y as u32) {
                    let p = image.get_pixel(x as u32, y as u32);
                    row[0] += p[0] as u64;
                    row[1] += p[1] as u64;
                    row[2] += p[2] as u64;
                    row[3] += 1;
                }
                let above = sums[y * stride + x + 1];
                sums[(y + 1) * stride + x + 1] = [
                    above[0] + row[0],
                    above[1] + row[1],
                    above[2] + row[2],
                    above[3] + row[3],
                ];
            }
        }
        Integral { width: w, sums }
    }

    fn height(&self) -> usize {
        self.sums.len() / (self.width + 1) - 1
    }

    /// Mean colour of valid pixels within `radius` of `(x, y)`.
    fn mean(&self, x: usize, y: usize, radius: usize) -> Option<[u8; 3]> {
        let stride = self.width + 1;
        let x0 = x.saturating_sub(radius);
        let y0 = y.saturating_sub(radius);
        let x1 = (x + radius + 1).min(self.width);
        let y1 = (y + radius + 1).min(self.height());
        let at = |xx: usize, yy: usize| self.sums[yy * stride + xx];
        let (a, b, c, d) = (at(x1, y1), at(x0, y1), at(x1, y0), at(x0, y0));
        let s: Vec<u64> = (0..4).map(|k| a[k] + d[k] - b[k] - c[k]).collect();
        (s[3] > 0).then(|| {
            let n = s[3];
            [
                ((s[0] + n / 2) / n) as u8,
                ((s[1] + n / 2) / n) as u8,
                ((s[2] + n / 2) / n) as u8,
            ]
        })
    }
}

/// Composites the frame over the reference view with a blurred seam, then
/// fills what is still missing from the history, blurred more the longer a
/// pixel has gone unobserved. Returns the filled frame; `history` is
/// replaced by it.
pub fn fill_missing(
    frame: &RenderedFrame,
    reference_view: &RgbImage,
    reference_valid: &Mask,
    history: &mut Option<FillHistory>,
    params: &FillParams,
) -> RenderedFrame {
    let (w, h) = frame.dimensions();
    let alpha = alpha_mask(frame, params);
    let mut image = frame.image.clone();
    let mut validity = frame.validity.clone();
    let mut provenance = vec![Provenance::None; alpha.len()];
    let mut holes = Vec::new();
    for (i, &a) in alpha.iter().enumerate() {
        let (x, y) = ((i % w as usize) as u32, (i / w as usize) as u32);
        let frame_valid = frame.validity.get(x, y);
        if a == 1.0 {
            provenance[i] = Provenance::Selected;
        } else if reference_valid.get(x, y) {
            let f = frame.image.get_pixel(x, y);
            let r = reference_view.get_pixel(x, y);
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = (a * f[c] as f32 + (1.0 - a) * r[c] as f32).round().clamp(0.0, 255.0) as u8;
            }
            image.put_pixel(x, y, Rgb(px));
            validity.set(x, y, true);
            provenance[i] = Provenance::CrossView;
        } else if frame_valid {
            provenance[i] = Provenance::Selected;
        } else {
            holes.push(i);
        }
    }

    let previous_age = |i: usize| history.as_ref().map_or(0, |hst| hst.age[i]);
    if let Some(hst) = history.as_ref() {
        if !holes.is_empty() && hst.valid.count() > 0 {
            let integral = Integral::new(&hst.image, &hst.valid);
            let limit = w.max(h) as usize;
            for &i in &holes {
                let (x, y) = (i % w as usize, i / w as usize);
                let age = hst.age[i] + 1;
                let mut radius = (age / params.frames_per_radius.max(1)).min(params.max_radius) as usize;
                let px = loop {
                    if let Some(px) = integral.mean(x, y, radius) {
                        break Some(px);
                    }
                    if radius >= limit {
                        break None;
                    }
                    radius = (2 * radius + 1).min(limit);
                };
                if let Some(px) = px {
                    image.put_pixel(x as u32, y as u32, Rgb(px));
                    validity.set(x as u32, y as u32, true);
                    provenance[i] = Provenance::Temporal;
                }
            }
        }
    }
    for &i in &holes {
        if provenance[i] == Provenance::None {
            image.put_pixel((i % w as usize) as u32, (i / w as usize) as u32, Rgb([0, 0, 0]));
        }
    }

    let age: Vec<u32> = provenance
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            Provenance::Selected | Provenance::CrossView => 0,
            Provenance::Temporal | Provenance::None => previous_age(i) + 1,
        })
        .collect();
    *history = Some(FillHistory {
        image: image.clone(),
        valid: validity.clone(),
        age,
    });

    frame.with_content(image, validity, provenance, frame.shift, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{warp, Homography};

    fn textured(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(50 + (x * 3) % 150) as u8, (60 + (y * 5) % 140) as u8, 90]))
    }

    fn frame_of(image: RgbImage, validity: Mask) -> RenderedFrame {
        RenderedFrame {
            t: 1,
            provenance: provenance_from(&validity),
            image,
            validity,
            source_camera: 0,
            atlas_id: 0,
            stale: false,
            shift: (0, 0),
            wide: None,
        }
    }

    #[test]
    fn zero_offset_is_identity() {
        let img = textured(30, 20);
        let f = frame_of(img.clone(), Mask::new(30, 20, true));
        let g = apply_centering(&f, (0, 0));
        assert_eq!(g.image, img);
        assert!(g.validity.all());
    }

    #[test]
    fn shift_exposes_band() {
        let f = frame_of(textured(30, 20), Mask::new(30, 20, true));
        let g = apply_centering(&f, (10, 0));
        for y in 0..20 {
            for x in 0..30 {
                assert_eq!(g.validity.get(x, y), x >= 10);
            }
        }
        assert_eq!(g.shift, (10, 0));
        let back = apply_centering(&g, (-10, 0));
        for y in 0..20 {
            for x in 0..20 {
                assert!(back.validity.get(x, y));
                assert_eq!(back.image.get_pixel(x, y), f.image.get_pixel(x, y));
            }
        }
    }

    #[test]
    fn wide_view_supplies_shifted_content() {
        let (w, h) = (40, 30);
        let img = textured(w, h);
        let canvas = Canvas::doubled(w, h);
        let warped = warp(&img, &Homography::translation(-8.0, 0.0), &canvas);
        let f = RenderedFrame::from_warped(1, warped, &canvas, (w, h), 1, 0, false);
        // The camera content sits 8 px left; shifting right by 8 restores it.
        let g = apply_centering(&f, (8, 0));
        assert!(g.validity.all());
        assert_eq!(g.image, img);
    }

    #[test]
    fn tracker_converges() {
        let (w, h) = (320, 240);
        let centered = centering_offsets(&vec![Some((160.0, 120.0)); 50], w, h, 0.05);
        assert!(centered.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
        let offsets = centering_offsets(&vec![Some((80.0, 120.0)); 100], w, h, 0.05);
        let (x, y) = offsets[99];
        assert!((x - 80.0).abs() < 0.01 * 80.0 && y.abs() < 1e-12, "{x}");
        let held = centering_offsets(&[Some((80.0, 120.0)), None, None], w, h, 0.5);
        assert_eq!(held[1], held[0]);
        assert_eq!(held[2], held[0]);
    }

    #[test]
    fn complete_frame_is_untouched() {
        let img = textured(60, 40);
        let f = frame_of(img.clone(), Mask::new(60, 40, true));
        let mut history = None;
        let out = fill_missing(&f, &RgbImage::new(60, 40), &Mask::new(60, 40, true), &mut history, &FillParams::default());
        assert_eq!(out.image, img);
        assert!(out.provenance.iter().all(|&p| p == Provenance::Selected));
    }

    #[test]
    fn missing_half_comes_from_reference() {
        let (w, h) = (120, 60);
        let img = textured(w, h);
        let reference = RgbImage::from_pixel(w, h, Rgb([200, 40, 40]));
        let validity = Mask::from_fn(w, h, |x, _| x >= w / 2);
        let mut frame_img = img.clone();
        for y in 0..h {
            for x in 0..w / 2 {
                frame_img.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
        let f = frame_of(frame_img, validity);
        let mut history = None;
        let out = fill_missing(&f, &reference, &Mask::new(w, h, true), &mut history, &FillParams::default());
        assert!(out.validity.all());
        for y in 0..h {
            assert_eq!(out.image.get_pixel(0, y), &Rgb([200, 40, 40]));
            assert_eq!(out.provenance[(y * w) as usize], Provenance::CrossView);
            // Far from the seam the frame is kept.
            assert_eq!(out.image.get_pixel(w - 1, y), img.get_pixel(w - 1, y));
        }
        // Pixels inside the seam band are convex combinations.
        let p = out.image.get_pixel(w / 2 + 5, h / 2);
        let q = img.get_pixel(w / 2 + 5, h / 2);
        for c in 0..3 {
            assert!(p[c] >= q[c].min(reference.get_pixel(0, 0)[c]) && p[c] <= q[c].max(reference.get_pixel(0, 0)[c]));
        }
    }

    #[test]
    fn holes_use_history_after_first_frame() {
        let (w, h) = (50, 40);
        let img = textured(w, h);
        let validity = Mask::from_fn(w, h, |x, _| x >= 10);
        let f = frame_of(img.clone(), validity);
        let no_ref = Mask::new(w, h, false);
        let black = RgbImage::new(w, h);
        let mut history = None;
        let first = fill_missing(&f, &black, &no_ref, &mut history, &FillParams::default());
        assert_eq!(first.provenance.iter().filter(|&&p| p == Provenance::None).count(), 400);
        let second = fill_missing(&f, &black, &no_ref, &mut history, &FillParams::default());
        assert!(second.provenance.iter().all(|&p| p != Provenance::None));
        assert!(second.validity.all());
        for frame in 3..40 {
            let mut g = f.clone();
            g.t = frame;
            let out = fill_missing(&g, &black, &no_ref, &mut history, &FillParams::default());
            assert!(out.validity.all());
        }
        assert!(history.unwrap().age[0] >= 38);
    }
}
