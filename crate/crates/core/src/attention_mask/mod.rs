//! Group-isolation (GIA) and region-modulated (RMA) attention masks.
//!
//! [`allow_rule`] is the single source of truth for every mask entry. A
//! built mask is stored block-compressed over the distinct tag classes of a
//! layout; the dense bit matrix is produced on demand.

mod bits;
mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use bits::BitMatrix;
pub use wire::{
    export_compressed, export_mask, import_compressed, import_dense, import_mask, DenseMask, MASK_MAGIC, MASK_VERSION,
};

use crate::sequence_layout::{Modality, Owner, TokenLayout, TokenTag};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("bad magic")]
    BadMagic,
    #[error("version mismatch: file has {0}, expected {MASK_VERSION}")]
    VersionMismatch(u32),
    #[error("truncated payload")]
    Truncated,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("digest mismatch vs layout")]
    DigestMismatch,
    #[error("unknown mask mode {0}")]
    UnknownMode(String),
    #[error("inconsistent mask: {0}")]
    Inconsistent(String),
    #[error("compressed mask format{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaskMode {
    Gia,
    Rma,
}

impl MaskMode {
    pub fn code(self) -> u8 {
        match self {
            MaskMode::Gia => 0,
            MaskMode::Rma => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MaskMode::Gia),
            1 => Some(MaskMode::Rma),
            _ => None,
        }
    }
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskMode::Gia => "GIA",
            MaskMode::Rma => "RMA",
        })
    }
}

impl FromStr for MaskMode {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gia" => Ok(MaskMode::Gia),
            "rma" => Ok(MaskMode::Rma),
            _ => Err(MaskError::UnknownMode(s.to_string())),
        }
    }
}

fn is_group(t: TokenTag) -> bool {
    matches!(t.owner(), Owner::Group(_))
}

fn is_group_spatial(t: TokenTag) -> bool {
    is_group(t) && t.modality() == Modality::Spatial
}

fn gia_allows(q: TokenTag, k: TokenTag) -> bool {
    let (qo, ko) = (q.owner(), k.owner());
    if qo == ko {
        // within a group, or U↔U / C↔C
        return true;
    }
    if q.modality() == Modality::Spatial && k.modality() == Modality::Spatial {
        // region↔region and region↔U
        return true;
    }
    match (qo, ko) {
        // C is a global prompt for group tokens of every modality
        (Owner::Cei, Owner::Group(_)) | (Owner::Group(_), Owner::Cei) => true,
        (Owner::Cei, Owner::Uncontrolled) | (Owner::Uncontrolled, Owner::Cei) => true,
        // different groups, or U against a non-spatial group token
        _ => false,
    }
}

fn rma_severs(q: TokenTag, k: TokenTag) -> bool {
    let (qo, ko) = (q.owner(), k.owner());
    let region_pair = is_group_spatial(q) && is_group_spatial(k) && qo != ko;
    let region_u =
        (is_group_spatial(q) && ko == Owner::Uncontrolled) || (qo == Owner::Uncontrolled && is_group_spatial(k));
    let region_c = (is_group_spatial(q) && ko == Owner::Cei) || (qo == Owner::Cei && is_group_spatial(k));
    let u_c = matches!(
        (qo, ko),
        (Owner::Uncontrolled, Owner::Cei) | (Owner::Cei, Owner::Uncontrolled)
    );
    region_pair || region_u || region_c || u_c
}

/// Whether query `q` may attend to key `k` under `mode`.
///
/// GIA allows: same owner; spatial↔spatial for any owners (including U);
/// CEI↔any group token; CEI↔U. Everything else, notably distinct groups
/// with a non-spatial side and U↔non-spatial group tokens, is blocked.
///
/// RMA starts from GIA and also blocks region↔region across groups,
/// region↔U, region↔CEI and U↔CEI. Text and visual tokens keep their CEI
/// access.
pub fn allow_rule(q: TokenTag, k: TokenTag, mode: MaskMode) -> bool {
    gia_allows(q, k)
        && match mode {
            MaskMode::Gia => true,
            MaskMode::Rma => !rma_severs(q, k),
        }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskBlock {
    /// Index into [`AttentionMaskArtifact::classes`].
    pub query: u32,
    pub key: u32,
    pub allow: bool,
}

/// A mask over one layout, compressed to tag-class blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMaskArtifact {
    mode: MaskMode,
    layout_digest: [u8; 32],
    classes: Vec<TokenTag>,
    token_classes: Vec<u32>,
    /// Row-major `classes × classes`, query class major.
    blocks: Vec<MaskBlock>,
    dense: Option<BitMatrix>,
}

impl AttentionMaskArtifact {
    pub(crate) fn from_raw(
        mode: MaskMode,
        layout_digest: [u8; 32],
        classes: Vec<TokenTag>,
        token_classes: Vec<u32>,
        allow: Vec<bool>,
    ) -> Result<Self, MaskError> {
        let n = classes.len();
        if allow.len() != n * n {
            return Err(MaskError::Inconsistent(format!(
                "{} block entries for {n} classes",
                allow.len()
            )));
        }
        if let Some(&bad) = token_classes.iter().find(|&&c| c as usize >= n) {
            return Err(MaskError::Inconsistent(format!("token class {bad} out of range")));
        }
        let blocks = allow
            .into_iter()
            .enumerate()
            .map(|(i, allow)| MaskBlock {
                query: (i / n) as u32,
                key: (i % n) as u32,
                allow,
            })
            .collect();
        Ok(Self {
            mode,
            layout_digest,
            classes,
            token_classes,
            blocks,
            dense: None,
        })
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn layout_digest(&self) -> &[u8; 32] {
        &self.layout_digest
    }

    pub fn total_len(&self) -> usize {
        self.token_classes.len()
    }

    pub fn classes(&self) -> &[TokenTag] {
        &self.classes
    }

    pub fn token_classes(&self) -> &[u32] {
        &self.token_classes
    }

    pub fn blocks(&self) -> &[MaskBlock] {
        &self.blocks
    }

    pub fn dense(&self) -> Option<&BitMatrix> {
        self.dense.as_ref()
    }

    #[inline]
    fn class_allows(&self, qc: u32, kc: u32) -> bool {
        self.blocks[qc as usize * self.classes.len() + kc as usize].allow
    }

    /// Mask entry for token pair `(q, k)`.
    #[inline]
    pub fn allows(&self, q: usize, k: usize) -> bool {
        self.class_allows(self.token_classes[q], self.token_classes[k])
    }

    pub fn tag_of(&self, token: usize) -> TokenTag {
        self.classes[self.token_classes[token] as usize]
    }

    /// Same artifact with the dense matrix materialized.
    pub fn with_dense(mut self) -> Self {
        if self.dense.is_none() {
            self.dense = Some(expand_dense(&self));
        }
        self
    }

    pub fn without_dense(mut self) -> Self {
        self.dense = None;
        self
    }

    /// Errors unless the artifact was built for `layout`.
    pub fn check_layout(&self, layout: &TokenLayout) -> Result<(), MaskError> {
        if layout.digest() != self.layout_digest {
            return Err(MaskError::DigestMismatch);
        }
        Ok(())
    }

    /// Rebuilds the block form from a dense matrix over `layout`. Fails
    /// when the dense matrix is not constant on every class block.
    pub fn recompress(layout: &TokenLayout, mode: MaskMode, dense: &BitMatrix) -> Result<Self, MaskError> {
        if dense.size() != layout.total_len() {
            return Err(MaskError::Inconsistent(format!(
                "dense size {} vs layout length {}",
                dense.size(),
                layout.total_len()
            )));
        }
        let (classes, token_classes) = classify(layout);
        let n = classes.len();
        let mut allow: Vec<Option<bool>> = vec![None; n * n];
        for q in 0..dense.size() {
            for k in 0..dense.size() {
                let slot = &mut allow[token_classes[q] as usize * n + token_classes[k] as usize];
                let bit = dense.get(q, k);
                match slot {
                    None => *slot = Some(bit),
                    Some(prev) if *prev != bit => {
                        return Err(MaskError::Inconsistent(format!(
                            "entry ({q}, {k}) differs from the rest of its block"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Self::from_raw(
            mode,
            layout.digest(),
            classes,
            token_classes,
            allow.into_iter().map(|a| a.unwrap_or(false)).collect(),
        )
    }
}

/// Distinct tags in sorted order plus each token's class index.
fn classify(layout: &TokenLayout) -> (Vec<TokenTag>, Vec<u32>) {
    let index: BTreeMap<TokenTag, u32> = {
        let mut distinct: Vec<TokenTag> = layout.tags().to_vec();
        distinct.sort();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(i, t)| (t, i as u32)).collect()
    };
    let token_classes = layout.tags().iter().map(|t| index[t]).collect();
    (index.into_keys().collect(), token_classes)
}

/// Compiles `allow_rule` over the layout's tag classes. The dense matrix is
/// not materialized.
pub fn build_mask(layout: &TokenLayout, mode: MaskMode) -> AttentionMaskArtifact {
    let (classes, token_classes) = classify(layout);
    let allow = classes
        .iter()
        .flat_map(|&q| classes.iter().map(move |&k| allow_rule(q, k, mode)))
        .collect();
    AttentionMaskArtifact::from_raw(mode, layout.digest(), classes, token_classes, allow)
        .expect("classes are consistent by construction")
}

/// `total_len × total_len` bits, query-major.
pub fn expand_dense(artifact: &AttentionMaskArtifact) -> BitMatrix {
    if let Some(d) = &artifact.dense {
        return d.clone();
    }
    let n = artifact.total_len();
    let mut m = BitMatrix::new(n);
    for q in 0..n {
        let qc = artifact.token_classes[q];
        for k in 0..n {
            if artifact.class_allows(qc, artifact.token_classes[k]) {
                m.set(q, k, true);
            }
        }
    }
    m
}
