//! Mean SSIM over uniform square windows, stride 1.
//!
//! Window statistics come from summed-area tables. Variances are population
//! variances (divide by the window pixel count).

use image::{GrayImage, RgbImage};

use super::{MetricError, SegMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

/// Row-major float plane.
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn gray(img: &GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

/// BT.601 luma of an RGB image.
pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2]))
        .collect()
}

/// Summed-area table with a zero border: `(w+1) × (h+1)`.
struct Integral {
    stride: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += value(y * width + x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn window(&self, x: usize, y: usize, size: usize) -> f64 {
        let s = self.stride;
        self.sums[(y + size) * s + x + size] - self.sums[y * s + x + size] - self.sums[(y + size) * s + x]
            + self.sums[y * s + x]
    }
}

pub(crate) fn ssim_planes(
    a: &Plane,
    b: &Plane,
    region: Option<&SegMask>,
    cfg: &SsimConfig,
) -> Result<f64, MetricError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricError::DimMismatch(a.width, a.height, b.width, b.height));
    }
    if let Some(r) = region {
        if r.width() != a.width || r.height() != a.height {
            return Err(MetricError::DimMismatch(a.width, a.height, r.width(), r.height()));
        }
    }
    let win = cfg.window;
    if win == 0 || a.width < win || a.height < win {
        return Err(MetricError::TooSmall {
            width: a.width,
            height: a.height,
            window: win,
        });
    }
    let (w, h) = (a.width, a.height);
    let sa = Integral::new(w, h, |i| a.data[i]);
    let sb = Integral::new(w, h, |i| b.data[i]);
    let saa = Integral::new(w, h, |i| a.data[i] * a.data[i]);
    let sbb = Integral::new(w, h, |i| b.data[i] * b.data[i]);
    let sab = Integral::new(w, h, |i| a.data[i] * b.data[i]);
    let inside = region.map(|r| Integral::new(w, h, |i| if r.bits()[i] { 1.0 } else { 0.0 }));

    let n = (win * win) as f64;
    let full = n;
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - win {
        for x in 0..=w - win {
            if let Some(r) = &inside {
                if r.window(x, y, win) != full {
                    continue;
                }
            }
            let mu_a = sa.window(x, y, win) / n;
            let mu_b = sb.window(x, y, win) / n;
            let var_a = saa.window(x, y, win) / n - mu_a * mu_a;
            let var_b = sbb.window(x, y, win) / n - mu_b * mu_b;
            let cov = sab.window(x, y, win) / n - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::EmptyRegion("full SSIM window"));
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

/// Mean SSIM of two grayscale images, clamped to `[0, 1]`.
pub fn ssim(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig) -> Result<f64, MetricError> {
    ssim_planes(&Plane::gray(a), &Plane::gray(b), None, cfg)
}

/// Mean SSIM over the windows lying entirely inside `region`.
pub fn ssim_in(a: &GrayImage, b: &GrayImage, region: &SegMask, cfg: &SsimConfig) -> Result<f64, MetricError> {
    ssim_planes(&Plane::gray(a), &Plane::gray(b), Some(region), cfg)
}

/// SSIM of the luma planes, optionally restricted to `region`.
pub fn ssim_rgb(a: &RgbImage, b: &RgbImage, region: Option<&SegMask>, cfg: &SsimConfig) -> Result<f64, MetricError> {
    let plane = |img: &RgbImage| Plane {
        width: img.width() as usize,
        height: img.height() as usize,
        data: luma(img),
    };
    ssim_planes(&plane(a), &plane(b), region, cfg)
}
