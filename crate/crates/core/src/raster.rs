//! Small raster helpers shared by the pipeline stages: binary masks, a
//! single-channel float plane, separable Gaussian blur and bilinear sampling.

use image::{GrayImage, Luma, RgbImage};

/// Binary per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&v| v)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!(self.dimensions(), other.dimensions());
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    /// 0/255 grayscale rendering, for debug dumps.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }
}

/// Single-channel `f32` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Luma with Rec.601 weights, on the 0..255 scale.
    pub fn from_rgb(image: &RgbImage) -> Self {
        let (w, h) = image.dimensions();
        let data = image
            .pixels()
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        Plane {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample; coordinates are clamped into the image.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn gaussian_blur(&self, sigma: f32) -> Plane {
        let radius = (3.0 * sigma).ceil().max(1.0) as usize;
        let kernel = gaussian_kernel(2 * radius + 1, sigma);
        separable_filter(self, &kernel)
    }
}

/// Normalized 1-D Gaussian kernel of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f32) -> Vec<f32> {
    assert!(size % 2 == 1, "kernel size must be odd");
    let r = (size / 2) as i64;
    let two_s2 = 2.0 * sigma as f64 * sigma as f64;
    let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / two_s2).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / sum) as f32).collect()
}

/// Horizontal then vertical convolution with replicated borders.
pub fn separable_filter(src: &Plane, kernel: &[f32]) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = kernel.len() / 2;
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let out = &mut tmp.data[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            if x >= r && x + r < w {
                let window = &row[x - r..=x + r];
                *o = window.iter().zip(kernel).map(|(a, b)| a * b).sum();
            } else {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - r as isize).clamp(0, w as isize - 1) as usize;
                    acc += kv * row[sx];
                }
                *o = acc;
            }
        }
    }
    let mut dst = Plane::new(w, h);
    for y in 0..h {
        let dst_row = &mut dst.data[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - r as isize).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp.data[sy * w..(sy + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    dst
}

/// Mean absolute per-channel difference over pixels where `mask` is set.
/// Returns `None` for an empty mask.
pub fn mean_abs_diff(a: &RgbImage, b: &RgbImage, mask: &Mask) -> Option<f64> {
    assert_eq!(a.dimensions(), b.dimensions());
    assert_eq!(a.dimensions(), mask.dimensions());
    let mut sum = 0u64;
    let mut n = 0u64;
    for ((pa, pb), &m) in a.pixels().zip(b.pixels()).zip(mask.as_slice()) {
        if m {
            for c in 0..3 {
                sum += (pa[c] as i32 - pb[c] as i32).unsigned_abs() as u64;
            }
            n += 3;
        }
    }
    (n > 0).then(|| sum as f64 / n as f64)
}
