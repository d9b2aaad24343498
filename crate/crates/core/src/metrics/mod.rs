//! Layout-control and background-consistency metrics.
//!
//! IN-R and FI-R compare a generated entity mask with its target region;
//! BG-S is a fixed weighted blend of four similarity components; AVG is the
//! plain mean of five externally scored quality metrics.

pub mod batch;
mod histogram;
mod ssim;

use std::fmt;

pub use histogram::{color_hist_sim, color_hist_sim_in, HistogramConfig};
pub use ssim::{luma, ssim, ssim_in, ssim_rgb, SsimConfig};

use crate::grid::BitGrid;

pub type SegMask = BitGrid;

/// Targets covering more than this fraction of the image are discarded.
pub const MAX_TARGET_AREA: f64 = 0.75;

/// BG-S weights for DINO, CLIP, SSIM and color histogram, in percent.
pub const BG_WEIGHTS_PERCENT: [f64; 4] = [40.0, 25.0, 20.0, 15.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("region contains no {0}")]
    EmptyRegion(&'static str),
    #[error("zero vector")]
    ZeroVector,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("missing value: {0}")]
    Missing(&'static str),
}

/// A ratio metric that may be undefined (empty denominator) or withheld
/// by the area filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Undefined,
    Discarded,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{v:.4}"),
            MetricValue::Undefined => f.write_str("undefined"),
            MetricValue::Discarded => f.write_str("discarded"),
        }
    }
}

fn check_dims(a: &SegMask, b: &SegMask) -> Result<(), MetricError> {
    if !a.same_dims(b) {
        return Err(MetricError::DimMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> MetricValue {
    if den == 0 {
        MetricValue::Undefined
    } else {
        MetricValue::Value(100.0 * num as f64 / den as f64)
    }
}

/// Share of the generated entity inside the target, in percent.
pub fn in_ratio(m_gen: &SegMask, m_trg: &SegMask) -> Result<MetricValue, MetricError> {
    check_dims(m_gen, m_trg)?;
    Ok(ratio(m_gen.intersection_count(m_trg), m_gen.count_ones()))
}

/// Share of the target covered by the generated entity, in percent.
pub fn fill_ratio(m_gen: &SegMask, m_trg: &SegMask) -> Result<MetricValue, MetricError> {
    check_dims(m_gen, m_trg)?;
    Ok(ratio(m_gen.intersection_count(m_trg), m_trg.count_ones()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaDecision {
    Keep,
    Discard,
}

/// Discards targets strictly larger than 75% of the image.
pub fn area_filter(m_trg: &SegMask) -> AreaDecision {
    // |m| / area > 3/4  ⇔  4|m| > 3·area, kept in integers
    if 4 * m_trg.count_ones() > 3 * m_trg.area() {
        AreaDecision::Discard
    } else {
        AreaDecision::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityInputs {
    pub dino: f64,
    pub clip: f64,
    pub ssim: f64,
    pub ch: f64,
}

fn unit_range(name: &'static str, value: f64) -> Result<f64, MetricError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MetricError::OutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// `100 · (0.4·DINO + 0.25·CLIP + 0.2·SSIM + 0.15·CH)`.
pub fn bg_similarity(s: &SimilarityInputs) -> Result<f64, MetricError> {
    let parts = [
        unit_range("dino", s.dino)?,
        unit_range("clip", s.clip)?,
        unit_range("ssim", s.ssim)?,
        unit_range("ch", s.ch)?,
    ];
    Ok(parts.iter().zip(BG_WEIGHTS_PERCENT).map(|(p, w)| p * w).sum())
}

/// Cosine similarity clamped to `[0, 1]`; anti-aligned vectors give 0.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(0.0, 1.0))
}

/// Externally scored quality metrics, each on a 0–100 scale.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QualityScores {
    pub dpg: Option<f64>,
    pub id_s: Option<f64>,
    pub ip_s: Option<f64>,
    pub bg_s: Option<f64>,
    pub aes: Option<f64>,
}

/// Unweighted mean of DPG, ID-S, IP-S, BG-S and AES.
pub fn avg_report(scores: &QualityScores) -> Result<f64, MetricError> {
    let named = [
        ("dpg", scores.dpg),
        ("id_s", scores.id_s),
        ("ip_s", scores.ip_s),
        ("bg_s", scores.bg_s),
        ("aes", scores.aes),
    ];
    let mut sum = 0.0;
    for (name, v) in named {
        let v = v.ok_or(MetricError::Missing(name))?;
        if !(0.0..=100.0).contains(&v) {
            return Err(MetricError::OutOfRange {
                name,
                value: v,
                lo: 0.0,
                hi: 100.0,
            });
        }
        sum += v;
    }
    Ok(sum / 5.0)
}
