//! Structured multi-reference input: visual/textual/spatial groups, the
//! optional cross-entity interaction text and the sampling parameters.
//!
//! Documents are TOML:
//!
//! ```toml
//! cei = "the dragon rides the car"
//! steps = 20
//! first_stage_ratio = 0.05
//! guidance_scale = 2.5
//! seed = 42
//!
//! [canvas]
//! w = 512
//! h = 512
//!
//! [[groups]]
//! id = 1
//! image = { source = "dragon.png", width = 512, height = 512 }
//! sad = { identifier = "a dragon", description = "keep the same appearance" }
//! region = { bbox = [0, 0, 256, 512] }
//!
//! [[groups]]
//! id = 2
//! image = { source = "car.png", width = 512, height = 512 }
//! sad = { identifier = "a car" }
//! region = { mask_file = "car_mask.pgm" }
//! ```
//!
//! Mask files are binary PGM resolved through a [`MaskSource`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::BitGrid;
use crate::pnm::{self, PnmError};

/// Canvas and visual reference dimensions are padded to this multiple
/// (8× autoencoder downsample followed by 2×2 patchification).
pub const PIXEL_ALIGN: u32 = 16;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("malformed document{}: {message}", line_suffix(*line))]
    Malformed { line: Option<usize>, message: String },
    #[error("missing required field{}: {message}", line_suffix(*line))]
    MissingField { line: Option<usize>, message: String },
    #[error("{}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("mask file {name}: {source}")]
    Mask {
        name: String,
        #[source]
        source: PnmError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Entity region in canvas pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    /// Half-open box `[x0, x1) × [y0, y1)`.
    BBox {
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
    },
    Bitmap(RegionBitmap),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionBitmap {
    /// Name the bitmap was loaded from; needed to write the document back.
    pub source: Option<String>,
    pub mask: BitGrid,
}

impl Region {
    pub fn bbox(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Region::BBox { x0, y0, x1, y1 }
    }

    /// Rasterizes onto a `width × height` canvas. Out-of-range parts are
    /// clipped and bitmaps of other sizes are padded or cropped.
    pub fn rasterize(&self, width: u32, height: u32) -> BitGrid {
        let (w, h) = (width as usize, height as usize);
        match self {
            Region::BBox { x0, y0, x1, y1 } => {
                BitGrid::rect(w, h, *x0 as usize, *y0 as usize, *x1 as usize, *y1 as usize)
            }
            Region::Bitmap(b) => b.mask.padded(w, h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfAttributeDescription {
    pub identifier: String,
    pub description: String,
}

/// Visual reference: an opaque source descriptor plus pixel dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub source: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VtsGroup {
    pub group_id: u32,
    pub visual_ref: ImageRef,
    pub sad: SelfAttributeDescription,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionSpec {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub groups: Vec<VtsGroup>,
    pub cei: Option<String>,
    pub total_steps: u32,
    pub first_stage_ratio: f64,
    /// Carried through for downstream runtimes; unused here.
    pub guidance_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn align_up(v: u32) -> u32 {
    v.div_ceil(PIXEL_ALIGN) * PIXEL_ALIGN
}

impl CompositionSpec {
    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Validation {
        let mut out = Validation::default();
        let (cw, ch) = (self.canvas_width, self.canvas_height);
        if cw == 0 {
            out.violation("canvas.w", "must be positive");
        }
        if ch == 0 {
            out.violation("canvas.h", "must be positive");
        }
        if self.groups.is_empty() {
            out.violation("groups", "at least one group is required");
        }

        let mut seen = BTreeSet::new();
        for (idx, g) in self.groups.iter().enumerate() {
            let path = format!("groups[{idx}]");
            if !seen.insert(g.group_id) {
                out.violation(format!("{path}.id"), "duplicate group_id");
            }
            if g.sad.identifier.trim().is_empty() {
                out.violation(format!("{path}.sad.identifier"), "must be non-empty");
            }
            if g.visual_ref.width == 0 || g.visual_ref.height == 0 {
                out.violation(format!("{path}.image"), "dimensions must be positive");
            }
            match &g.region {
                Region::BBox { x0, y0, x1, y1 } => {
                    if x0 >= x1 || y0 >= y1 {
                        out.violation(format!("{path}.region.bbox"), "empty bbox");
                    } else if *x1 > cw || *y1 > ch {
                        out.violation(format!("{path}.region.bbox"), "region outside canvas");
                    }
                }
                Region::Bitmap(b) => {
                    if b.mask.width() != cw as usize || b.mask.height() != ch as usize {
                        out.violation(
                            format!("{path}.region.mask_file"),
                            format!("mask is {}x{}, canvas is {cw}x{ch}", b.mask.width(), b.mask.height()),
                        );
                    } else if !b.mask.any() {
                        out.violation(format!("{path}.region.mask_file"), "mask has no set pixels");
                    }
                }
            }
        }
        let expected: BTreeSet<u32> = (1..=self.groups.len() as u32).collect();
        if seen.len() == self.groups.len() && seen != expected {
            out.violation("groups", "group ids must be contiguous from 1");
        }

        if self.total_steps == 0 {
            out.violation("steps", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.first_stage_ratio) {
            out.violation("first_stage_ratio", "first_stage_ratio out of [0,1]");
        }
        if !self.guidance_scale.is_finite() {
            out.violation("guidance_scale", "must be finite");
        }
        if self.seed > i64::MAX as u64 {
            out.violation("seed", "must fit in a signed 64-bit integer");
        }

        if out.is_ok() {
            let rasters: Vec<BitGrid> = self.groups.iter().map(|g| g.region.rasterize(cw, ch)).collect();
            for a in 0..rasters.len() {
                for b in a + 1..rasters.len() {
                    if rasters[a].intersection_count(&rasters[b]) > 0 {
                        let (ia, ib) = (self.groups[a].group_id, self.groups[b].group_id);
                        out.warning(
                            format!("groups[{a}].region"),
                            format!(
                                "regions overlap; precedence by lowest group_id (groups {} and {})",
                                ia.min(ib),
                                ia.max(ib)
                            ),
                        );
                    }
                }
            }
        }
        out
    }

    /// Pads canvas and visual reference dims up to multiples of
    /// [`PIXEL_ALIGN`]; bitmap regions grow with false pixels. Groups are
    /// sorted by id. Idempotent.
    pub fn normalized(&self) -> CompositionSpec {
        let cw = align_up(self.canvas_width);
        let ch = align_up(self.canvas_height);
        let mut groups: Vec<VtsGroup> = self
            .groups
            .iter()
            .map(|g| VtsGroup {
                visual_ref: ImageRef {
                    width: align_up(g.visual_ref.width),
                    height: align_up(g.visual_ref.height),
                    ..g.visual_ref.clone()
                },
                region: match &g.region {
                    Region::Bitmap(b) => Region::Bitmap(RegionBitmap {
                        source: b.source.clone(),
                        mask: b.mask.padded(cw as usize, ch as usize),
                    }),
                    bbox => bbox.clone(),
                },
                ..g.clone()
            })
            .collect();
        groups.sort_by_key(|g| g.group_id);
        CompositionSpec {
            canvas_width: cw,
            canvas_height: ch,
            groups,
            ..self.clone()
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.canvas_width.is_multiple_of(PIXEL_ALIGN) && self.canvas_height.is_multiple_of(PIXEL_ALIGN)
    }

    /// Rasterized region of every group, in group order.
    pub fn rasterized_regions(&self) -> Vec<BitGrid> {
        self.groups
            .iter()
            .map(|g| g.region.rasterize(self.canvas_width, self.canvas_height))
            .collect()
    }

    /// Serializes back to the TOML document form. Bitmap regions must carry
    /// their source name.
    pub fn to_document(&self) -> Result<String, SpecError> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let region = match &g.region {
                    Region::BBox { x0, y0, x1, y1 } => RawRegion {
                        bbox: Some([*x0, *y0, *x1, *y1]),
                        mask_file: None,
                    },
                    Region::Bitmap(b) => RawRegion {
                        bbox: None,
                        mask_file: Some(b.source.clone().ok_or_else(|| {
                            SpecError::Serialize(format!("group {} bitmap region has no source name", g.group_id))
                        })?),
                    },
                };
                Ok(RawGroup {
                    id: g.group_id,
                    image: RawImage {
                        source: g.visual_ref.source.clone(),
                        width: g.visual_ref.width,
                        height: g.visual_ref.height,
                    },
                    sad: RawSad {
                        identifier: g.sad.identifier.clone(),
                        description: g.sad.description.clone(),
                    },
                    region,
                })
            })
            .collect::<Result<Vec<_>, SpecError>>()?;
        let seed = i64::try_from(self.seed).map_err(|_| SpecError::Serialize("seed exceeds i64 range".into()))?;
        let raw = RawSpec {
            cei: self.cei.clone(),
            steps: self.total_steps,
            first_stage_ratio: self.first_stage_ratio,
            guidance_scale: self.guidance_scale,
            seed,
            canvas: RawCanvas {
                w: self.canvas_width,
                h: self.canvas_height,
            },
            groups,
        };
        toml::to_string(&raw).map_err(|e| SpecError::Serialize(e.to_string()))
    }
}

/// Pixelwise complement of the union of all group regions, at canvas size.
/// All-false when the regions tile the canvas.
pub fn derive_uncontrolled(spec: &CompositionSpec) -> BitGrid {
    let (w, h) = (spec.canvas_width as usize, spec.canvas_height as usize);
    spec.rasterized_regions()
        .iter()
        .fold(BitGrid::new(w, h), |acc, r| acc.or(r))
        .not()
}

/// Resolves `mask_file` names to bitmaps.
pub trait MaskSource {
    fn load(&self, name: &str) -> Result<BitGrid, SpecError>;
}

/// Reads PGM files relative to a base directory.
#[derive(Debug, Clone)]
pub struct DirMaskSource {
    base: PathBuf,
}

impl DirMaskSource {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }
}

impl MaskSource for DirMaskSource {
    fn load(&self, name: &str) -> Result<BitGrid, SpecError> {
        pnm::read_mask(&self.base.join(name)).map_err(|source| SpecError::Mask {
            name: name.to_string(),
            source,
        })
    }
}

/// In-memory masks keyed by name.
#[derive(Debug, Clone, Default)]
pub struct MemoryMaskSource(pub HashMap<String, BitGrid>);

impl MaskSource for MemoryMaskSource {
    fn load(&self, name: &str) -> Result<BitGrid, SpecError> {
        self.0.get(name).cloned().ok_or_else(|| SpecError::Mask {
            name: name.to_string(),
            source: PnmError::Io {
                path: name.to_string(),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            },
        })
    }
}

/// Parses and validates a spec document. Unknown fields are rejected and
/// any invariant violation fails the parse.
pub fn parse_spec(document: &str, masks: &dyn MaskSource) -> Result<CompositionSpec, SpecError> {
    let raw: RawSpec = toml::from_str(document).map_err(|e| {
        let line = e
            .span()
            .map(|s| document[..s.start.min(document.len())].matches('\n').count() + 1);
        let message = e.message().to_string();
        if message.contains("missing field") {
            SpecError::MissingField { line, message }
        } else {
            SpecError::Malformed { line, message }
        }
    })?;

    let mut groups = Vec::with_capacity(raw.groups.len());
    let mut violations = Vec::new();
    for (idx, g) in raw.groups.into_iter().enumerate() {
        let region = match (g.region.bbox, g.region.mask_file) {
            (Some([x0, y0, x1, y1]), None) => Region::BBox { x0, y0, x1, y1 },
            (None, Some(name)) => Region::Bitmap(RegionBitmap {
                mask: masks.load(&name)?,
                source: Some(name),
            }),
            _ => {
                violations.push(Violation {
                    path: format!("groups[{idx}].region"),
                    message: "exactly one of bbox or mask_file is required".into(),
                });
                continue;
            }
        };
        groups.push(VtsGroup {
            group_id: g.id,
            visual_ref: ImageRef {
                source: g.image.source,
                width: g.image.width,
                height: g.image.height,
            },
            sad: SelfAttributeDescription {
                identifier: g.sad.identifier,
                description: g.sad.description,
            },
            region,
        });
    }
    if !violations.is_empty() {
        return Err(SpecError::Invalid(violations));
    }
    if raw.seed < 0 {
        return Err(SpecError::Invalid(vec![Violation {
            path: "seed".into(),
            message: "must be non-negative".into(),
        }]));
    }

    let spec = CompositionSpec {
        canvas_width: raw.canvas.w,
        canvas_height: raw.canvas.h,
        groups,
        cei: raw.cei.filter(|c| !c.is_empty()),
        total_steps: raw.steps,
        first_stage_ratio: raw.first_stage_ratio,
        guidance_scale: raw.guidance_scale,
        seed: raw.seed as u64,
    };
    let report = spec.validate();
    if !report.is_ok() {
        return Err(SpecError::Invalid(report.violations));
    }
    Ok(spec)
}

/// Reads a spec file, resolving mask files relative to its directory.
pub fn parse_spec_file(path: &Path) -> Result<CompositionSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_spec(&text, &DirMaskSource::new(base))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cei: Option<String>,
    steps: u32,
    first_stage_ratio: f64,
    guidance_scale: f64,
    seed: i64,
    canvas: RawCanvas,
    groups: Vec<RawGroup>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCanvas {
    w: u32,
    h: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    id: u32,
    image: RawImage,
    sad: RawSad,
    region: RawRegion,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    source: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSad {
    identifier: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[u32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
steps = 1
first_stage_ratio = 0.0
guidance_scale = 1.0
seed = 0
canvas = { w = 64, h = 64 }

[[groups]]
id = 1
image = { source = "a.png", width = 64, height = 64 }
sad = { identifier = "a dragon" }
region = { bbox = [0, 0, 64, 64] }
"#;

    fn no_masks() -> MemoryMaskSource {
        MemoryMaskSource::default()
    }

    fn group(id: u32, region: Region) -> VtsGroup {
        VtsGroup {
            group_id: id,
            visual_ref: ImageRef {
                source: format!("ref{id}.png"),
                width: 64,
                height: 64,
            },
            sad: SelfAttributeDescription {
                identifier: format!("entity {id}"),
                description: String::new(),
            },
            region,
        }
    }

    fn spec_with(groups: Vec<VtsGroup>) -> CompositionSpec {
        CompositionSpec {
            canvas_width: 64,
            canvas_height: 64,
            groups,
            cei: None,
            total_steps: 20,
            first_stage_ratio: 0.05,
            guidance_scale: 2.5,
            seed: 1,
        }
    }

    #[test]
    fn minimal_document() {
        let spec = parse_spec(MINIMAL, &no_masks()).unwrap();
        assert_eq!(spec.groups.len(), 1);
        assert_eq!(spec.cei, None);
        assert_eq!(spec.groups[0].region, Region::bbox(0, 0, 64, 64));
    }

    #[test]
    fn sampling_values_are_carried_verbatim() {
        let doc = MINIMAL
            .replace("steps = 1", "steps = 20")
            .replace("first_stage_ratio = 0.0", "first_stage_ratio = 0.05")
            .replace("guidance_scale = 1.0", "guidance_scale = 2.5");
        let spec = parse_spec(&doc, &no_masks()).unwrap();
        assert_eq!(spec.total_steps, 20);
        assert_eq!(spec.first_stage_ratio, 0.05);
        assert_eq!(spec.guidance_scale, 2.5);
    }

    #[test]
    fn bbox_past_canvas_is_rejected() {
        let doc = MINIMAL.replace("[0, 0, 64, 64]", "[0, 0, 65, 64]");
        let err = parse_spec(&doc, &no_masks()).unwrap_err();
        assert!(err.to_string().contains("region outside canvas"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let doc = format!("bogus = 3\n{MINIMAL}");
        assert!(matches!(
            parse_spec(&doc, &no_masks()),
            Err(SpecError::Malformed { .. })
        ));
    }

    #[test]
    fn missing_field_is_reported() {
        let doc = MINIMAL.replace("seed = 0\n", "");
        let err = parse_spec(&doc, &no_masks()).unwrap_err();
        assert!(matches!(err, SpecError::MissingField { .. }), "{err}");
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn malformed_document_reports_line() {
        let err = parse_spec("steps = 1\nseed = = 3\n", &no_masks()).unwrap_err();
        match err {
            SpecError::Malformed { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_group_id() {
        let doc = format!(
            "{MINIMAL}\n[[groups]]\nid = 1\nimage = {{ source = \"b\", width = 16, height = 16 }}\nsad = {{ identifier = \"b\" }}\nregion = {{ bbox = [0, 0, 8, 8] }}\n"
        );
        let err = parse_spec(&doc, &no_masks()).unwrap_err();
        assert!(err.to_string().contains("duplicate group_id"), "{err}");
    }

    #[test]
    fn empty_cei_is_absent() {
        let doc = format!("cei = \"\"\n{MINIMAL}");
        assert_eq!(parse_spec(&doc, &no_masks()).unwrap().cei, None);
    }

    #[test]
    fn bitmap_region_from_source() {
        let mut masks = MemoryMaskSource::default();
        masks.0.insert("m.pgm".into(), BitGrid::rect(64, 64, 10, 10, 20, 20));
        let doc = MINIMAL.replace("{ bbox = [0, 0, 64, 64] }", "{ mask_file = \"m.pgm\" }");
        let spec = parse_spec(&doc, &masks).unwrap();
        match &spec.groups[0].region {
            Region::Bitmap(b) => assert_eq!(b.mask.count_ones(), 100),
            r => panic!("unexpected {r:?}"),
        }
        let back = parse_spec(&spec.to_document().unwrap(), &masks).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn uncontrolled_is_empty_when_tiled() {
        let spec = spec_with(vec![
            group(1, Region::bbox(0, 0, 32, 64)),
            group(2, Region::bbox(32, 0, 64, 64)),
        ]);
        assert!(!derive_uncontrolled(&spec).any());
    }

    #[test]
    fn uncontrolled_left_half() {
        let spec = spec_with(vec![group(1, Region::bbox(0, 0, 32, 64))]);
        let u = derive_uncontrolled(&spec);
        assert_eq!(u.count_ones(), 2048);
        // oracle: count right-half pixels directly
        let expected = (0..64)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .filter(|&(x, _)| x >= 32)
            .count();
        assert_eq!(u.count_ones(), expected);
        assert!(u.get(32, 0) && !u.get(31, 63));
    }

    #[test]
    fn full_canvas_bitmap_leaves_nothing() {
        let spec = spec_with(vec![group(
            1,
            Region::Bitmap(RegionBitmap {
                source: None,
                mask: BitGrid::filled(64, 64, true),
            }),
        )]);
        assert!(!derive_uncontrolled(&spec).any());
    }

    #[test]
    fn validate_three_groups_ok() {
        let spec = spec_with(vec![
            group(1, Region::bbox(0, 0, 20, 20)),
            group(2, Region::bbox(20, 0, 40, 20)),
            group(3, Region::bbox(40, 0, 60, 20)),
        ]);
        let v = spec.validate();
        assert!(v.is_ok() && v.warnings.is_empty(), "{v:?}");
    }

    #[test]
    fn validate_ratio_out_of_range() {
        let mut spec = spec_with(vec![group(1, Region::bbox(0, 0, 20, 20))]);
        spec.first_stage_ratio = 1.5;
        let v = spec.validate();
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].path, "first_stage_ratio");
        assert_eq!(v.violations[0].message, "first_stage_ratio out of [0,1]");
    }

    #[test]
    fn validate_overlap_warns() {
        let a = Region::bbox(0, 0, 32, 32);
        let b = Region::bbox(16, 0, 48, 32);
        // the two boxes share a 16x32 strip
        assert_eq!(a.rasterize(64, 64).intersection_count(&b.rasterize(64, 64)), 512);
        let v = spec_with(vec![group(1, a), group(2, b)]).validate();
        assert!(v.is_ok());
        assert_eq!(v.warnings.len(), 1);
        assert!(v.warnings[0]
            .message
            .starts_with("regions overlap; precedence by lowest group_id"));
    }

    #[test]
    fn validate_collects_every_violation() {
        let mut spec = spec_with(vec![
            group(1, Region::bbox(0, 0, 0, 10)),
            group(3, Region::bbox(0, 0, 10, 10)),
        ]);
        spec.total_steps = 0;
        let paths: Vec<_> = spec.validate().violations.into_iter().map(|v| v.path).collect();
        assert_eq!(paths, ["groups[0].region.bbox", "groups", "steps"]);
    }

    #[test]
    fn normalization_pads_to_sixteen() {
        let mut spec = spec_with(vec![group(
            1,
            Region::Bitmap(RegionBitmap {
                source: None,
                mask: BitGrid::filled(50, 40, true),
            }),
        )]);
        spec.canvas_width = 50;
        spec.canvas_height = 40;
        spec.groups[0].visual_ref.width = 100;
        let n = spec.normalized();
        assert_eq!((n.canvas_width, n.canvas_height), (64, 48));
        assert_eq!(n.groups[0].visual_ref.width, 112);
        match &n.groups[0].region {
            Region::Bitmap(b) => {
                assert_eq!((b.mask.width(), b.mask.height()), (64, 48));
                assert_eq!(b.mask.count_ones(), 2000);
            }
            r => panic!("unexpected {r:?}"),
        }
        assert_eq!(n.normalized(), n);
    }
}
