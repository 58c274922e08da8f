use image::{Rgb, RgbImage};
use nalgebra::Point2;

use super::atlas::HomographyAtlas;
use super::homography::Homography;
use crate::raster::Mask;

/// Output raster placed in reference-view coordinates: canvas pixel
/// `(u, v)` shows reference point `(u - origin_x, v - origin_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub origin_x: i32,
    pub origin_y: i32,
}

impl Canvas {
    /// Canvas equal to the reference view.
    pub fn same(width: u32, height: u32) -> Self {
        Canvas {
            width,
            height,
            origin_x: 0,
            origin_y: 0,
        }
    }

    /// Canvas twice the reference size with the reference view centered.
    pub fn doubled(width: u32, height: u32) -> Self {
        Canvas {
            width: 2 * width,
            height: 2 * height,
            origin_x: (width / 2) as i32,
            origin_y: (height / 2) as i32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: RgbImage,
    /// Pixels that received source content.
    pub valid: Mask,
}

#[inline]
fn bilinear(image: &RgbImage, x: f64, y: f64) -> [u8; 3] {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f64).clamp(0.0, 1.0);
    let fy = (y - y0 as f64).clamp(0.0, 1.0);
    let raw = image.as_raw();
    let px = |xx: usize, yy: usize, ch: usize| raw[(yy * w + xx) * 3 + ch] as f64;
    let mut out = [0u8; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let top = px(x0, y0, ch) * (1.0 - fx) + px(x1, y0, ch) * fx;
        let bottom = px(x0, y1, ch) * (1.0 - fx) + px(x1, y1, ch) * fx;
        *o = (top * (1.0 - fy) + bottom * fy + 0.5).clamp(0.0, 255.0) as u8;
    }
    out
}

/// Resamples `image` through `to_reference` onto `canvas` with bilinear
/// interpolation. Canvas pixels whose preimage falls outside the source are
/// black and marked invalid.
pub fn warp(image: &RgbImage, to_reference: &Homography, canvas: &Canvas) -> Warped {
    let (sw, sh) = (image.width() as f64, image.height() as f64);
    let mut out = RgbImage::new(canvas.width, canvas.height);
    let mut valid = Mask::new(canvas.width, canvas.height, false);
    if image.width() == 0 || image.height() == 0 {
        return Warped { image: out, valid };
    }
    let inverse = to_reference.inverse();
    let eps = 1e-9;
    for v in 0..canvas.height {
        for u in 0..canvas.width {
            let p = Point2::new((u as i64 - canvas.origin_x as i64) as f64, (v as i64 - canvas.origin_y as i64) as f64);
            let Some(s) = inverse.try_apply(&p) else { continue };
            if s.x >= -eps && s.y >= -eps && s.x <= sw - 1.0 + eps && s.y <= sh - 1.0 + eps {
                out.put_pixel(u, v, Rgb(bilinear(image, s.x.max(0.0), s.y.max(0.0))));
                valid.set(u, v, true);
            }
        }
    }
    Warped { image: out, valid }
}

/// Warps every camera image of a frame stack into the reference canvas.
pub fn apply_atlas(images: &[RgbImage], atlas: &HomographyAtlas, canvas: &Canvas) -> Vec<Warped> {
    images
        .iter()
        .zip(&atlas.to_reference)
        .map(|(img, h)| warp(img, h, canvas))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) % 256) as u8]))
    }

    #[test]
    fn identity_warp_reproduces_input() {
        let img = pattern(40, 30);
        let w = warp(&img, &Homography::identity(), &Canvas::same(40, 30));
        assert_eq!(w.image, img);
        assert!(w.valid.all());
    }

    #[test]
    fn translation_on_doubled_canvas() {
        let (w, h) = (40u32, 30u32);
        let img = pattern(w, h);
        let canvas = Canvas::doubled(w, h);
        let out = warp(&img, &Homography::translation(10.0, 10.0), &canvas);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x + 10 + w / 2, y + 10 + h / 2);
                assert_eq!(out.image.get_pixel(u, v), img.get_pixel(x, y));
                assert!(out.valid.get(u, v));
            }
        }
        // Within the reference window, the 10-pixel band on the top and
        // left has no source content.
        for v in 0..h {
            for u in 0..w {
                let inside = out.valid.get(u + w / 2, v + h / 2);
                assert_eq!(inside, u >= 10 && v >= 10, "({u}, {v})");
            }
        }
        assert_eq!(out.valid.count(), (w * h) as usize);
    }

    #[test]
    fn apply_atlas_keeps_reference_intact() {
        let imgs = vec![pattern(20, 16), pattern(20, 16)];
        let mut atlas = HomographyAtlas::identity(vec!["a".into(), "b".into()], 0, 0);
        atlas.to_reference[1] = Homography::translation(-3.0, 2.0);
        let out = apply_atlas(&imgs, &atlas, &Canvas::same(20, 16));
        assert_eq!(out[0].image, imgs[0]);
        assert_eq!(out[1].valid.count(), 17 * 14);
    }
}
