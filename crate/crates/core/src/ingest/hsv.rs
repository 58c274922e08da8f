//! 8-bit HSV conversion on the 0..179 hue scale (hue in degrees halved).

use image::{Rgb, RgbImage};

/// HSV planes of an RGB image. Hue is `0..=179` (degrees / 2), saturation
/// and value are `0..=255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvImage {
    width: u32,
    height: u32,
    hue: Vec<u8>,
    saturation: Vec<u8>,
    value: Vec<u8>,
}

impl HsvImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn hue(&self) -> &[u8] {
        &self.hue
    }

    pub fn saturation(&self) -> &[u8] {
        &self.saturation
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }

    pub fn hue_mut(&mut self) -> &mut [u8] {
        &mut self.hue
    }

    pub fn saturation_mut(&mut self) -> &mut [u8] {
        &mut self.saturation
    }

    pub fn value_mut(&mut self) -> &mut [u8] {
        &mut self.value
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = y as usize * self.width as usize + x as usize;
        [self.hue[i], self.saturation[i], self.value[i]]
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let [h, s, v] = self.get(x, y);
            Rgb(hsv_to_rgb(h, s, v))
        })
    }
}

pub fn to_hsv(image: &RgbImage) -> HsvImage {
    let (width, height) = image.dimensions();
    let n = width as usize * height as usize;
    let mut hue = Vec::with_capacity(n);
    let mut saturation = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for p in image.pixels() {
        let [h, s, v] = rgb_to_hsv(p.0);
        hue.push(h);
        saturation.push(s);
        value.push(v);
    }
    HsvImage {
        width,
        height,
        hue,
        saturation,
        value,
    }
}

#[inline]
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (rf, gf, bf) = (r as f32, g as f32, b as f32);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let diff = max - min;
    let s = if max > 0.0 { 255.0 * diff / max } else { 0.0 };
    let mut h = if diff == 0.0 {
        0.0
    } else if max == rf {
        60.0 * (gf - bf) / diff
    } else if max == gf {
        120.0 + 60.0 * (bf - rf) / diff
    } else {
        240.0 + 60.0 * (rf - gf) / diff
    };
    if h < 0.0 {
        h += 360.0;
    }
    let mut h8 = (h / 2.0).round() as u16;
    if h8 >= 180 {
        h8 -= 180;
    }
    [h8 as u8, s.round() as u8, max as u8]
}

#[inline]
pub fn hsv_to_rgb(h: u8, s: u8, v: u8) -> [u8; 3] {
    let h = (h as f32 * 2.0) % 360.0;
    let s = s as f32 / 255.0;
    let v = v as f32;
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        (r1 + m).round().clamp(0.0, 255.0) as u8,
        (g1 + m).round().clamp(0.0, 255.0) as u8,
        (b1 + m).round().clamp(0.0, 255.0) as u8,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv([255, 0, 0])[0], 0);
        assert_eq!(rgb_to_hsv([0, 255, 0])[0], 60);
        assert_eq!(rgb_to_hsv([0, 0, 255])[0], 120);
        assert_eq!(rgb_to_hsv([128, 128, 128])[1], 0);
        assert_eq!(rgb_to_hsv([128, 128, 128])[2], 128);
    }

    #[test]
    fn hue_stays_below_180() {
        // Magenta-ish red rounds up to 180 before wrapping.
        let h = rgb_to_hsv([255, 0, 1])[0];
        assert!(h < 180);
    }

    /// Worst-case round-trip error over a 32^3 subsample of the RGB cube.
    ///
    /// The hue plane holds 180 levels, so a hue step of 2 degrees moves the
    /// middle channel by up to `value / 60` per degree of rounding; at most
    /// 1 degree of hue rounding plus 0.5 saturation rounding and 0.5 output
    /// rounding gives a bound of `255 / 60 + 1 = 5.25`. Achromatic and
    /// primary colours round-trip exactly.
    #[test]
    fn round_trip_error_is_bounded() {
        let mut worst = 0i32;
        let mut exact_gray = true;
        for r in (0..256).step_by(8) {
            for g in (0..256).step_by(8) {
                for b in (0..256).step_by(8) {
                    let rgb = [r as u8, g as u8, b as u8];
                    let [h, s, v] = rgb_to_hsv(rgb);
                    assert!(h <= 179);
                    let back = hsv_to_rgb(h, s, v);
                    for c in 0..3 {
                        worst = worst.max((back[c] as i32 - rgb[c] as i32).abs());
                    }
                    if r == g && g == b && back != rgb {
                        exact_gray = false;
                    }
                }
            }
        }
        assert!(exact_gray);
        assert!(worst <= 5, "worst round-trip error {worst}");
    }

    #[test]
    fn round_trip_within_one_on_hue_grid() {
        // Colours whose hue lies exactly on the 2-degree grid lose nothing
        // to hue quantization.
        for v in (0..256).step_by(15) {
            for s in (0..256).step_by(15) {
                for h in 0..180u8 {
                    let rgb = hsv_to_rgb(h, s as u8, v as u8);
                    let [h2, s2, v2] = rgb_to_hsv(rgb);
                    let back = hsv_to_rgb(h2, s2, v2);
                    for c in 0..3 {
                        assert!((back[c] as i32 - rgb[c] as i32).abs() <= 1);
                    }
                }
            }
        }
    }
}
