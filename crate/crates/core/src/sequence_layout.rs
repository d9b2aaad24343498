//! Unified token sequence: every text, visual and canvas token tagged with
//! its owner and modality.
//!
//! Packing order is `[T_1 .. T_N, C?, V_1 .. V_N, canvas]`. Mask rules only
//! look at tags, so the order is a convention and nothing depends on it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::structured_input::{CompositionSpec, PIXEL_ALIGN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("pixel dims {width}x{height} are not multiples of 16")]
    NotAligned { width: u32, height: u32 },
    #[error("invalid tag: {0}")]
    InvalidTag(String),
    #[error("layout format{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, message: String },
}

fn format_err(message: impl Into<String>) -> LayoutError {
    LayoutError::Format {
        line: None,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    Group(GroupId),
    Cei,
    Uncontrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Textual,
    Visual,
    Spatial,
}

/// `(owner, modality)` coordinate of a token. CEI tokens are always
/// textual and uncontrolled tokens are always spatial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenTag {
    owner: Owner,
    modality: Modality,
}

impl TokenTag {
    pub fn new(owner: Owner, modality: Modality) -> Result<Self, LayoutError> {
        match (owner, modality) {
            (Owner::Cei, m) if m != Modality::Textual => {
                Err(LayoutError::InvalidTag("CEI tokens must be textual".into()))
            }
            (Owner::Uncontrolled, m) if m != Modality::Spatial => {
                Err(LayoutError::InvalidTag("uncontrolled tokens must be spatial".into()))
            }
            (Owner::Group(GroupId(0)), _) => Err(LayoutError::InvalidTag("group ids start at 1".into())),
            _ => Ok(Self { owner, modality }),
        }
    }

    pub const fn textual(group: u32) -> Self {
        Self {
            owner: Owner::Group(GroupId(group)),
            modality: Modality::Textual,
        }
    }

    pub const fn visual(group: u32) -> Self {
        Self {
            owner: Owner::Group(GroupId(group)),
            modality: Modality::Visual,
        }
    }

    pub const fn spatial(group: u32) -> Self {
        Self {
            owner: Owner::Group(GroupId(group)),
            modality: Modality::Spatial,
        }
    }

    pub const fn cei() -> Self {
        Self {
            owner: Owner::Cei,
            modality: Modality::Textual,
        }
    }

    pub const fn uncontrolled() -> Self {
        Self {
            owner: Owner::Uncontrolled,
            modality: Modality::Spatial,
        }
    }

    pub fn owner(&self) -> Owner {
        self.owner
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn group(&self) -> Option<GroupId> {
        match self.owner {
            Owner::Group(g) => Some(g),
            _ => None,
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Group(GroupId(i)) => write!(f, "g{i}"),
            Owner::Cei => f.write_str("c"),
            Owner::Uncontrolled => f.write_str("u"),
        }
    }
}

impl FromStr for Owner {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" => Ok(Owner::Cei),
            "u" => Ok(Owner::Uncontrolled),
            _ => s
                .strip_prefix('g')
                .and_then(|n| n.parse::<u32>().ok())
                .filter(|&n| n > 0)
                .map(|n| Owner::Group(GroupId(n)))
                .ok_or_else(|| LayoutError::InvalidTag(format!("unknown owner `{s}`"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Textual => "t",
            Modality::Visual => "v",
            Modality::Spatial => "s",
        })
    }
}

impl FromStr for Modality {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t" | "textual" => Ok(Modality::Textual),
            "v" | "visual" => Ok(Modality::Visual),
            "s" | "spatial" => Ok(Modality::Spatial),
            _ => Err(LayoutError::InvalidTag(format!("unknown modality `{s}`"))),
        }
    }
}

/// Written as `owner:modality`, e.g. `g2:v`, `c:t`, `u:s`.
impl fmt::Display for TokenTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.owner, self.modality)
    }
}

impl FromStr for TokenTag {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (owner, modality) = s
            .split_once(':')
            .ok_or_else(|| LayoutError::InvalidTag(format!("expected owner:modality, got `{s}`")))?;
        TokenTag::new(owner.parse()?, modality.parse()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    /// Every token in the span has this tag.
    Tagged(TokenTag),
    /// Canvas tokens; tags come from the canvas grid in raster order.
    Canvas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    pub length: usize,
    pub kind: SpanKind,
}

/// Canvas token ownership, `height × width` tokens in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanvasGrid {
    width: usize,
    height: usize,
    tags: Vec<TokenTag>,
}

impl CanvasGrid {
    pub fn new(width: usize, height: usize, tags: Vec<TokenTag>) -> Result<Self, LayoutError> {
        if tags.len() != width * height {
            return Err(format_err(format!(
                "canvas grid {width}x{height} needs {} tags, got {}",
                width * height,
                tags.len()
            )));
        }
        if let Some(bad) = tags
            .iter()
            .find(|t| t.modality != Modality::Spatial || t.owner == Owner::Cei)
        {
            return Err(format_err(format!("canvas tag {bad} is not a spatial region tag")));
        }
        Ok(Self { width, height, tags })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tags(&self) -> &[TokenTag] {
        &self.tags
    }

    pub fn get(&self, col: usize, row: usize) -> TokenTag {
        self.tags[row * self.width + col]
    }

    pub fn owned_by(&self, owner: Owner) -> usize {
        self.tags.iter().filter(|t| t.owner == owner).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    pub sad_tokens: usize,
    pub cei_tokens: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            sad_tokens: 32,
            cei_tokens: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLayout {
    total_len: usize,
    spans: Vec<TokenSpan>,
    canvas: Option<CanvasGrid>,
    tags: Vec<TokenTag>,
}

/// Latent tokens for an image: `pixel/8` latent cells per side, then 2×2
/// patches, so `(h/8 · w/8) / 4`.
pub fn latent_token_count(pixel_w: u32, pixel_h: u32) -> Result<usize, LayoutError> {
    if !pixel_w.is_multiple_of(PIXEL_ALIGN) || !pixel_h.is_multiple_of(PIXEL_ALIGN) {
        return Err(LayoutError::NotAligned {
            width: pixel_w,
            height: pixel_h,
        });
    }
    let (lw, lh) = (pixel_w as usize / 8, pixel_h as usize / 8);
    Ok(lw * lh / 4)
}

/// Assigns each 16×16 canvas footprint to the region covering most of it.
///
/// Uncovered pixels count toward the uncontrolled region, so a group needs
/// at least as much coverage as the uncovered area to claim a token. Ties
/// go to the lowest group id, and groups win ties against uncontrolled.
/// Overlapping pixels count for every group covering them.
pub fn assign_canvas_tokens(spec: &CompositionSpec) -> CanvasGrid {
    let spec = spec.normalized();
    let align = PIXEL_ALIGN as usize;
    let (w_tok, h_tok) = (spec.canvas_width as usize / align, spec.canvas_height as usize / align);
    let regions = spec.rasterized_regions();
    let mut tags = Vec::with_capacity(w_tok * h_tok);
    let mut counts = vec![0usize; regions.len()];
    for row in 0..h_tok {
        for col in 0..w_tok {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut uncovered = 0usize;
            for y in row * align..(row + 1) * align {
                for x in col * align..(col + 1) * align {
                    let mut hit = false;
                    for (c, r) in counts.iter_mut().zip(&regions) {
                        if r.get(x, y) {
                            *c += 1;
                            hit = true;
                        }
                    }
                    if !hit {
                        uncovered += 1;
                    }
                }
            }
            // groups are sorted by id, so the first maximum is the lowest id
            let best = counts
                .iter()
                .enumerate()
                .fold(None::<(usize, usize)>, |best, (i, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((i, c)),
                });
            let tag = match best {
                Some((i, c)) if c > 0 && c >= uncovered => TokenTag::spatial(spec.groups[i].group_id),
                _ => TokenTag::uncontrolled(),
            };
            tags.push(tag);
        }
    }
    CanvasGrid {
        width: w_tok,
        height: h_tok,
        tags,
    }
}

/// Packs a spec into the unified sequence.
pub fn pack(spec: &CompositionSpec, config: &LayoutConfig) -> Result<TokenLayout, LayoutError> {
    let spec = spec.normalized();
    let mut spans = Vec::new();
    let mut cursor = 0usize;
    let mut push = |length: usize, kind: SpanKind, spans: &mut Vec<TokenSpan>| {
        if length > 0 {
            spans.push(TokenSpan {
                start: cursor,
                length,
                kind,
            });
            cursor += length;
        }
    };
    for g in &spec.groups {
        push(
            config.sad_tokens,
            SpanKind::Tagged(TokenTag::textual(g.group_id)),
            &mut spans,
        );
    }
    if spec.cei.is_some() {
        push(config.cei_tokens, SpanKind::Tagged(TokenTag::cei()), &mut spans);
    }
    for g in &spec.groups {
        let n = latent_token_count(g.visual_ref.width, g.visual_ref.height)?;
        push(n, SpanKind::Tagged(TokenTag::visual(g.group_id)), &mut spans);
    }
    let canvas = assign_canvas_tokens(&spec);
    push(canvas.tags.len(), SpanKind::Canvas, &mut spans);
    TokenLayout::from_parts(spans, Some(canvas))
}

impl TokenLayout {
    /// Builds a layout straight from a tag sequence. Runs of equal tags
    /// become spans; there is no canvas grid.
    pub fn from_tags(tags: Vec<TokenTag>) -> Self {
        let mut spans: Vec<TokenSpan> = Vec::new();
        for (i, &t) in tags.iter().enumerate() {
            match spans.last_mut() {
                Some(s) if s.kind == SpanKind::Tagged(t) => s.length += 1,
                _ => spans.push(TokenSpan {
                    start: i,
                    length: 1,
                    kind: SpanKind::Tagged(t),
                }),
            }
        }
        Self {
            total_len: tags.len(),
            spans,
            canvas: None,
            tags,
        }
    }

    /// Validates span structure and flattens tags.
    pub fn from_parts(spans: Vec<TokenSpan>, canvas: Option<CanvasGrid>) -> Result<Self, LayoutError> {
        let mut tags = Vec::new();
        let mut canvas_seen = false;
        for s in &spans {
            if s.start != tags.len() {
                return Err(format_err(format!(
                    "span at {} does not start where the previous one ended ({})",
                    s.start,
                    tags.len()
                )));
            }
            if s.length == 0 {
                return Err(format_err("empty span"));
            }
            match s.kind {
                SpanKind::Tagged(t) => tags.extend(std::iter::repeat_n(t, s.length)),
                SpanKind::Canvas => {
                    if canvas_seen {
                        return Err(format_err("more than one canvas span"));
                    }
                    canvas_seen = true;
                    let grid = canvas
                        .as_ref()
                        .ok_or_else(|| format_err("canvas span without a canvas grid"))?;
                    if grid.tags.len() != s.length {
                        return Err(format_err(format!(
                            "canvas span has {} tokens but the grid has {}",
                            s.length,
                            grid.tags.len()
                        )));
                    }
                    tags.extend_from_slice(&grid.tags);
                }
            }
        }
        if canvas.is_some() && !canvas_seen {
            return Err(format_err("canvas grid without a canvas span"));
        }
        Ok(Self {
            total_len: tags.len(),
            spans,
            canvas,
            tags,
        })
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.spans
    }

    pub fn canvas(&self) -> Option<&CanvasGrid> {
        self.canvas.as_ref()
    }

    pub fn tags(&self) -> &[TokenTag] {
        &self.tags
    }

    pub fn tag(&self, index: usize) -> TokenTag {
        self.tags[index]
    }

    /// Position of every token within its span (raster index for canvas).
    pub fn span_offsets(&self) -> Vec<usize> {
        self.spans.iter().flat_map(|s| 0..s.length).collect()
    }

    pub fn count(&self, tag: TokenTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    pub fn indices_where(&self, mut pred: impl FnMut(TokenTag) -> bool) -> Vec<usize> {
        (0..self.total_len).filter(|&i| pred(self.tags[i])).collect()
    }

    /// Returns the same layout with tokens reordered so that new position
    /// `i` holds old token `order[i]`. The result has no canvas grid.
    pub fn permuted(&self, order: &[usize]) -> TokenLayout {
        TokenLayout::from_tags(order.iter().map(|&i| self.tags[i]).collect())
    }

    pub fn to_text(&self) -> String {
        let doc = LayoutDoc {
            total_len: self.total_len,
            spans: self
                .spans
                .iter()
                .map(|s| {
                    let (owner, modality) = match s.kind {
                        SpanKind::Tagged(t) => (t.owner.to_string(), t.modality.to_string()),
                        SpanKind::Canvas => ("canvas".to_string(), "s".to_string()),
                    };
                    SpanDoc {
                        start: s.start,
                        length: s.length,
                        owner,
                        modality,
                    }
                })
                .collect(),
            canvas: self.canvas.as_ref().map(|c| CanvasDoc {
                width: c.width,
                height: c.height,
                tags: encode_runs(c.tags.iter().map(|t| t.owner.to_string())),
            }),
        };
        toml::to_string(&doc).expect("layout document serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, LayoutError> {
        let doc: LayoutDoc = toml::from_str(text).map_err(|e| LayoutError::Format {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let canvas = doc
            .canvas
            .map(|c| -> Result<CanvasGrid, LayoutError> {
                let tags = decode_runs(&c.tags)?
                    .into_iter()
                    .map(|o| TokenTag::new(o.parse()?, Modality::Spatial))
                    .collect::<Result<Vec<_>, _>>()?;
                CanvasGrid::new(c.width, c.height, tags)
            })
            .transpose()?;
        let spans = doc
            .spans
            .into_iter()
            .map(|s| -> Result<TokenSpan, LayoutError> {
                let kind = if s.owner == "canvas" {
                    SpanKind::Canvas
                } else {
                    SpanKind::Tagged(TokenTag::new(s.owner.parse()?, s.modality.parse()?)?)
                };
                Ok(TokenSpan {
                    start: s.start,
                    length: s.length,
                    kind,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let layout = TokenLayout::from_parts(spans, canvas)?;
        if layout.total_len != doc.total_len {
            return Err(format_err(format!(
                "total_len is {} but spans cover {}",
                doc.total_len, layout.total_len
            )));
        }
        Ok(layout)
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

/// `3*g1 u 2*g2`: run length, `*`, value; runs of one omit the count.
fn encode_runs(values: impl Iterator<Item = String>) -> String {
    let mut runs: Vec<(usize, String)> = Vec::new();
    for v in values {
        match runs.last_mut() {
            Some((n, last)) if *last == v => *n += 1,
            _ => runs.push((1, v)),
        }
    }
    runs.iter()
        .map(|(n, v)| if *n == 1 { v.clone() } else { format!("{n}*{v}") })
        .collect::<Vec<_>>()
        .join(" ")
}

fn decode_runs(text: &str) -> Result<Vec<String>, LayoutError> {
    let mut out = Vec::new();
    for run in text.split_whitespace() {
        let (n, v) = match run.split_once('*') {
            Some((n, v)) => (
                n.parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| format_err(format!("bad run `{run}`")))?,
                v,
            ),
            None => (1, run),
        };
        out.extend(std::iter::repeat_n(v.to_string(), n));
    }
    Ok(out)
}

pub(crate) fn encode_index_runs(values: &[u32]) -> String {
    encode_runs(values.iter().map(u32::to_string))
}

pub(crate) fn decode_index_runs(text: &str) -> Result<Vec<u32>, LayoutError> {
    decode_runs(text)?
        .into_iter()
        .map(|v| v.parse::<u32>().map_err(|_| format_err(format!("bad index `{v}`"))))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutDoc {
    total_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    canvas: Option<CanvasDoc>,
    spans: Vec<SpanDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanvasDoc {
    width: usize,
    height: usize,
    tags: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanDoc {
    start: usize,
    length: usize,
    owner: String,
    modality: String,
}
