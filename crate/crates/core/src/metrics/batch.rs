//! Batch evaluation from a manifest.
//!
//! Manifest: one sample per line, whitespace separated,
//! `<image.ppm> <target_mask.pgm> <generated_mask.pgm> <sidecar.toml|->`.
//! Blank lines and `#` comments are skipped; relative paths resolve against
//! the manifest's directory.
//!
//! Sidecar (all keys optional):
//!
//! ```toml
//! dino = 0.91                     # or dino_embed_a / dino_embed_b
//! clip = 0.88                     # or clip_embed_a / clip_embed_b
//! reference_image = "source.ppm"  # SSIM and CH against the image, background only
//! ssim = 0.70                     # used when there is no reference image
//! ch = 0.81
//! [scores]
//! dpg = 85.0
//! id_s = 78.0
//! ip_s = 72.0
//! aes = 53.0
//! ```
//!
//! BG-S is computed over the background, the complement of the target
//! mask, with SSIM windows fully inside it.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{
    area_filter, avg_report, bg_similarity, color_hist_sim_in, cosine_similarity, fill_ratio, in_ratio, ssim_rgb,
    AreaDecision, HistogramConfig, MetricError, MetricValue, QualityScores, SegMask, SimilarityInputs, SsimConfig,
};
use crate::pnm::{self, PnmError};

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("{path}:{line}: {message}")]
    Manifest { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: PnmError,
    },
    #[error("{path}{}: {message}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
    Sidecar {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("manifest line {line}: {source}")]
    Metric {
        line: usize,
        #[source]
        source: MetricError,
    },
}

impl BatchError {
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            BatchError::Io { .. }
                | BatchError::Image {
                    source: PnmError::Io { .. },
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub line: usize,
    pub image: PathBuf,
    pub target_mask: PathBuf,
    pub generated_mask: PathBuf,
    pub sidecar: Option<PathBuf>,
}

pub fn parse_manifest(text: &str, base: &Path, name: &str) -> Result<Vec<ManifestEntry>, BatchError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(BatchError::Manifest {
                path: name.to_string(),
                line: i + 1,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        out.push(ManifestEntry {
            line: i + 1,
            image: base.join(fields[0]),
            target_mask: base.join(fields[1]),
            generated_mask: base.join(fields[2]),
            sidecar: (fields[3] != "-").then(|| base.join(fields[3])),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub dino: Option<f64>,
    pub dino_embed_a: Option<Vec<f64>>,
    pub dino_embed_b: Option<Vec<f64>>,
    pub clip: Option<f64>,
    pub clip_embed_a: Option<Vec<f64>>,
    pub clip_embed_b: Option<Vec<f64>>,
    pub reference_image: Option<String>,
    pub ssim: Option<f64>,
    pub ch: Option<f64>,
    pub scores: Option<SidecarScores>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarScores {
    pub dpg: Option<f64>,
    pub id_s: Option<f64>,
    pub ip_s: Option<f64>,
    pub aes: Option<f64>,
}

impl Sidecar {
    pub fn parse(text: &str, path: &str) -> Result<Self, BatchError> {
        toml::from_str(text).map_err(|e| BatchError::Sidecar {
            path: path.to_string(),
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }
}

fn embedding_component(
    scalar: Option<f64>,
    a: &Option<Vec<f64>>,
    b: &Option<Vec<f64>>,
) -> Result<Option<f64>, MetricError> {
    match (scalar, a, b) {
        (Some(v), _, _) => Ok(Some(v)),
        (None, Some(a), Some(b)) => cosine_similarity(a, b).map(Some),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub line: usize,
    pub image: String,
    pub area: AreaDecision,
    pub in_r: MetricValue,
    pub fi_r: MetricValue,
    pub bg_s: MetricValue,
    pub avg: MetricValue,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatchConfig {
    pub ssim: SsimConfig,
    pub histogram: HistogramConfig,
}

#[allow(clippy::too_many_arguments)]
/// Scores one sample from in-memory inputs. `reference` is the image the
/// background is compared against.
pub fn evaluate_sample(
    line: usize,
    image_name: &str,
    image: &RgbImage,
    target: &SegMask,
    generated: &SegMask,
    sidecar: &Sidecar,
    reference: Option<&RgbImage>,
    cfg: &BatchConfig,
) -> Result<SampleResult, MetricError> {
    let dims = (image.width() as usize, image.height() as usize);
    for m in [target, generated] {
        if (m.width(), m.height()) != dims {
            return Err(MetricError::DimMismatch(dims.0, dims.1, m.width(), m.height()));
        }
    }
    let area = area_filter(target);
    let (in_r, fi_r) = match area {
        AreaDecision::Discard => (MetricValue::Discarded, MetricValue::Discarded),
        AreaDecision::Keep => (in_ratio(generated, target)?, fill_ratio(generated, target)?),
    };

    let background = target.not();
    let (ssim, ch) = match reference {
        Some(r) => {
            let s = match ssim_rgb(image, r, Some(&background), &cfg.ssim) {
                Ok(v) => Some(v),
                Err(MetricError::EmptyRegion(_)) => None,
                Err(e) => return Err(e),
            };
            let c = match color_hist_sim_in(image, r, &background, &cfg.histogram) {
                Ok(v) => Some(v),
                Err(MetricError::EmptyRegion(_)) => None,
                Err(e) => return Err(e),
            };
            (s, c)
        }
        None => (sidecar.ssim, sidecar.ch),
    };
    let dino = embedding_component(sidecar.dino, &sidecar.dino_embed_a, &sidecar.dino_embed_b)?;
    let clip = embedding_component(sidecar.clip, &sidecar.clip_embed_a, &sidecar.clip_embed_b)?;
    let bg_s = match (dino, clip, ssim, ch) {
        (Some(dino), Some(clip), Some(ssim), Some(ch)) => {
            MetricValue::Value(bg_similarity(&SimilarityInputs { dino, clip, ssim, ch })?)
        }
        _ => MetricValue::Undefined,
    };
    let avg = match (&sidecar.scores, bg_s) {
        (Some(s), MetricValue::Value(bg)) => {
            let scores = QualityScores {
                dpg: s.dpg,
                id_s: s.id_s,
                ip_s: s.ip_s,
                bg_s: Some(bg),
                aes: s.aes,
            };
            match avg_report(&scores) {
                Ok(v) => MetricValue::Value(v),
                Err(MetricError::Missing(_)) => MetricValue::Undefined,
                Err(e) => return Err(e),
            }
        }
        _ => MetricValue::Undefined,
    };
    Ok(SampleResult {
        line,
        image: image_name.to_string(),
        area,
        in_r,
        fi_r,
        bg_s,
        avg,
    })
}

fn load_mask(path: &Path) -> Result<SegMask, BatchError> {
    pnm::read_mask(path).map_err(|source| BatchError::Image {
        path: path.display().to_string(),
        source,
    })
}

fn load_image(path: &Path) -> Result<RgbImage, BatchError> {
    pnm::read_ppm(path).map_err(|source| BatchError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Loads every file named by the entry and scores it.
pub fn evaluate_entry(entry: &ManifestEntry, cfg: &BatchConfig) -> Result<SampleResult, BatchError> {
    let image = load_image(&entry.image)?;
    let target = load_mask(&entry.target_mask)?;
    let generated = load_mask(&entry.generated_mask)?;
    let (sidecar, reference) = match &entry.sidecar {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| BatchError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let sidecar = Sidecar::parse(&text, &path.display().to_string())?;
            let reference = match &sidecar.reference_image {
                Some(r) => Some(load_image(&path.parent().unwrap_or(Path::new(".")).join(r))?),
                None => None,
            };
            (sidecar, reference)
        }
        None => (Sidecar::default(), None),
    };
    evaluate_sample(
        entry.line,
        &entry.image.display().to_string(),
        &image,
        &target,
        &generated,
        &sidecar,
        reference.as_ref(),
        cfg,
    )
    .map_err(|source| BatchError::Metric {
        line: entry.line,
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub samples: Vec<SampleResult>,
}

fn mean(values: impl Iterator<Item = MetricValue>) -> MetricValue {
    let defined: Vec<f64> = values.filter_map(MetricValue::value).collect();
    if defined.is_empty() {
        MetricValue::Undefined
    } else {
        MetricValue::Value(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum ReportValue {
    Number(f64),
    Status(&'static str),
}

impl From<MetricValue> for ReportValue {
    fn from(v: MetricValue) -> Self {
        match v {
            MetricValue::Value(x) => ReportValue::Number(x),
            MetricValue::Undefined => ReportValue::Status("undefined"),
            MetricValue::Discarded => ReportValue::Status("discarded"),
        }
    }
}

#[derive(Serialize)]
struct ReportDoc {
    aggregate: AggregateDoc,
    samples: Vec<SampleDoc>,
}

#[derive(Serialize)]
struct AggregateDoc {
    samples: usize,
    kept: usize,
    discarded: usize,
    in_r: ReportValue,
    fi_r: ReportValue,
    bg_s: ReportValue,
    avg: ReportValue,
}

#[derive(Serialize)]
struct SampleDoc {
    line: usize,
    image: String,
    in_r: ReportValue,
    fi_r: ReportValue,
    bg_s: ReportValue,
    avg: ReportValue,
}

impl BatchReport {
    /// Means over defined values; discarded samples do not enter IN-R/FI-R.
    pub fn aggregate(&self) -> [MetricValue; 4] {
        [
            mean(self.samples.iter().map(|s| s.in_r)),
            mean(self.samples.iter().map(|s| s.fi_r)),
            mean(self.samples.iter().map(|s| s.bg_s)),
            mean(self.samples.iter().map(|s| s.avg)),
        ]
    }

    pub fn to_text(&self) -> String {
        let [in_r, fi_r, bg_s, avg] = self.aggregate();
        let discarded = self.samples.iter().filter(|s| s.area == AreaDecision::Discard).count();
        let doc = ReportDoc {
            aggregate: AggregateDoc {
                samples: self.samples.len(),
                kept: self.samples.len() - discarded,
                discarded,
                in_r: in_r.into(),
                fi_r: fi_r.into(),
                bg_s: bg_s.into(),
                avg: avg.into(),
            },
            samples: self
                .samples
                .iter()
                .map(|s| SampleDoc {
                    line: s.line,
                    image: s.image.clone(),
                    in_r: s.in_r.into(),
                    fi_r: s.fi_r.into(),
                    bg_s: s.bg_s.into(),
                    avg: s.avg.into(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("report serializes")
    }
}

/// Evaluates a manifest file. Samples are reported in manifest order.
pub fn run_manifest(path: &Path, cfg: &BatchConfig) -> Result<BatchReport, BatchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BatchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base, &path.display().to_string())?;
    let samples = entries
        .iter()
        .map(|e| evaluate_entry(e, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchReport { samples })
}
