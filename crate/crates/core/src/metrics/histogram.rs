use image::RgbImage;

use super::{MetricError, SegMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramConfig {
    /// Bins per channel; must divide 256.
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bins: 32 }
    }
}

fn channel_counts(img: &RgbImage, region: Option<&SegMask>, bins: usize) -> [Vec<u64>; 3] {
    let mut counts = [vec![0u64; bins], vec![0u64; bins], vec![0u64; bins]];
    for (i, p) in img.pixels().enumerate() {
        if region.is_some_and(|r| !r.bits()[i]) {
            continue;
        }
        for (c, hist) in counts.iter_mut().enumerate() {
            hist[usize::from(p.0[c]) * bins / 256] += 1;
        }
    }
    counts
}

fn hist_sim(a: &RgbImage, b: &RgbImage, region: Option<&SegMask>, cfg: &HistogramConfig) -> Result<f64, MetricError> {
    let (aw, ah, bw, bh) = (
        a.width() as usize,
        a.height() as usize,
        b.width() as usize,
        b.height() as usize,
    );
    if (aw, ah) != (bw, bh) {
        return Err(MetricError::DimMismatch(aw, ah, bw, bh));
    }
    if let Some(r) = region {
        if (r.width(), r.height()) != (aw, ah) {
            return Err(MetricError::DimMismatch(aw, ah, r.width(), r.height()));
        }
    }
    if cfg.bins == 0 || 256 % cfg.bins != 0 {
        return Err(MetricError::OutOfRange {
            name: "bins",
            value: cfg.bins as f64,
            lo: 1.0,
            hi: 256.0,
        });
    }
    let pixels = region.map_or(aw * ah, SegMask::count_ones) as u64;
    if pixels == 0 {
        return Err(MetricError::EmptyRegion("pixels"));
    }
    let ha = channel_counts(a, region, cfg.bins);
    let hb = channel_counts(b, region, cfg.bins);
    // both histograms share the pixel count, so intersect raw counts
    let total: f64 = ha
        .iter()
        .zip(&hb)
        .map(|(ca, cb)| {
            let overlap: u64 = ca.iter().zip(cb).map(|(x, y)| (*x).min(*y)).sum();
            overlap as f64 / pixels as f64
        })
        .sum();
    Ok(total / 3.0)
}

/// Mean per-channel histogram intersection of normalized histograms.
pub fn color_hist_sim(a: &RgbImage, b: &RgbImage, cfg: &HistogramConfig) -> Result<f64, MetricError> {
    hist_sim(a, b, None, cfg)
}

/// [`color_hist_sim`] over the pixels of `region` only.
pub fn color_hist_sim_in(
    a: &RgbImage,
    b: &RgbImage,
    region: &SegMask,
    cfg: &HistogramConfig,
) -> Result<f64, MetricError> {
    hist_sim(a, b, Some(region), cfg)
}
