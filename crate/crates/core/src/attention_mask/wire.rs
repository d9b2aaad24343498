//! On-disk forms of a mask.
//!
//! Binary (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `LAMK`                            |
//! | 4      | 4    | version (`u32`)                         |
//! | 8      | 1    | mode (0 = GIA, 1 = RMA)                 |
//! | 9      | 8    | total_len (`u64`)                       |
//! | 17     | 32   | layout digest                           |
//! | 49     | 1    | flags, bit0 = dense payload present     |
//! | 50     | ...  | dense rows, `ceil(n/8)` bytes each      |
//!
//! The compressed block form travels as a TOML sidecar.

use serde::{Deserialize, Serialize};

use super::{expand_dense, AttentionMaskArtifact, BitMatrix, MaskError, MaskMode};
use crate::sequence_layout::{decode_index_runs, encode_index_runs, TokenTag};

pub const MASK_MAGIC: [u8; 4] = *b"LAMK";
pub const MASK_VERSION: u32 = 1;
const HEADER_LEN: usize = 50;
const FLAG_DENSE: u8 = 0b1;

/// Header plus optional dense payload, as read from the binary file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMask {
    pub mode: MaskMode,
    pub total_len: usize,
    pub layout_digest: [u8; 32],
    pub dense: Option<BitMatrix>,
}

pub fn export_mask(artifact: &AttentionMaskArtifact, dense: bool) -> Vec<u8> {
    let n = artifact.total_len();
    let payload = if dense { n * n.div_ceil(8) } else { 0 };
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(&MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.push(artifact.mode().code());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(artifact.layout_digest());
    out.push(if dense { FLAG_DENSE } else { 0 });
    if dense {
        out.extend_from_slice(expand_dense(artifact).as_bytes());
    }
    out
}

/// Decodes the binary form on its own.
pub fn import_dense(bytes: &[u8]) -> Result<DenseMask, MaskError> {
    if bytes.len() < 4 {
        return Err(MaskError::Truncated);
    }
    if bytes[..4] != MASK_MAGIC {
        return Err(MaskError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(MaskError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MASK_VERSION {
        return Err(MaskError::VersionMismatch(version));
    }
    let mode = MaskMode::from_code(bytes[8]).ok_or_else(|| MaskError::UnknownMode(bytes[8].to_string()))?;
    let total_len = usize::try_from(u64::from_le_bytes(bytes[9..17].try_into().unwrap()))
        .map_err(|_| MaskError::Inconsistent("total_len does not fit in memory".into()))?;
    let layout_digest: [u8; 32] = bytes[17..49].try_into().unwrap();
    let flags = bytes[49];
    if flags & !FLAG_DENSE != 0 {
        return Err(MaskError::Inconsistent(format!("unknown flag bits {flags:#04x}")));
    }
    let rest = &bytes[HEADER_LEN..];
    let dense = if flags & FLAG_DENSE != 0 {
        let want = total_len
            .checked_mul(total_len.div_ceil(8))
            .ok_or(MaskError::Truncated)?;
        if rest.len() < want {
            return Err(MaskError::Truncated);
        }
        if rest.len() > want {
            return Err(MaskError::TrailingBytes(rest.len() - want));
        }
        Some(
            BitMatrix::from_packed(total_len, rest.to_vec())
                .ok_or_else(|| MaskError::Inconsistent("nonzero padding bits".into()))?,
        )
    } else {
        if !rest.is_empty() {
            return Err(MaskError::TrailingBytes(rest.len()));
        }
        None
    };
    Ok(DenseMask {
        mode,
        total_len,
        layout_digest,
        dense,
    })
}

/// Rebuilds an artifact from its binary file and compressed sidecar,
/// checking that both describe the same mask.
pub fn import_mask(bytes: &[u8], compressed: &str) -> Result<AttentionMaskArtifact, MaskError> {
    let header = import_dense(bytes)?;
    let artifact = import_compressed(compressed)?;
    if header.mode != artifact.mode() {
        return Err(MaskError::Inconsistent(format!(
            "binary mode {} vs sidecar mode {}",
            header.mode,
            artifact.mode()
        )));
    }
    if header.total_len != artifact.total_len() {
        return Err(MaskError::Inconsistent(format!(
            "binary total_len {} vs sidecar {}",
            header.total_len,
            artifact.total_len()
        )));
    }
    if &header.layout_digest != artifact.layout_digest() {
        return Err(MaskError::DigestMismatch);
    }
    match header.dense {
        Some(dense) => {
            if dense != expand_dense(&artifact) {
                return Err(MaskError::Inconsistent(
                    "dense payload disagrees with block form".into(),
                ));
            }
            Ok(artifact.with_dense())
        }
        None => Ok(artifact),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompressedDoc {
    mode: String,
    layout_digest: String,
    total_len: usize,
    classes: Vec<String>,
    /// Run-length encoded class index per token.
    token_classes: String,
    /// One row per query class, one `0`/`1` per key class.
    allow: Vec<String>,
}

pub fn export_compressed(artifact: &AttentionMaskArtifact) -> String {
    let n = artifact.classes().len();
    let doc = CompressedDoc {
        mode: artifact.mode().to_string().to_ascii_lowercase(),
        layout_digest: hex::encode(artifact.layout_digest()),
        total_len: artifact.total_len(),
        classes: artifact.classes().iter().map(ToString::to_string).collect(),
        token_classes: encode_index_runs(artifact.token_classes()),
        allow: artifact
            .blocks()
            .chunks(n.max(1))
            .take(n)
            .map(|row| row.iter().map(|b| if b.allow { '1' } else { '0' }).collect())
            .collect(),
    };
    toml::to_string(&doc).expect("compressed mask serializes")
}

pub fn import_compressed(text: &str) -> Result<AttentionMaskArtifact, MaskError> {
    let format = |message: String| MaskError::Format { line: None, message };
    let doc: CompressedDoc = toml::from_str(text).map_err(|e| MaskError::Format {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let mode: MaskMode = doc.mode.parse()?;
    let digest: [u8; 32] = hex::decode(&doc.layout_digest)
        .ok()
        .and_then(|d| d.try_into().ok())
        .ok_or_else(|| format("layout_digest must be 64 hex digits".into()))?;
    let classes = doc
        .classes
        .iter()
        .map(|c| c.parse::<TokenTag>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format(e.to_string()))?;
    let token_classes = decode_index_runs(&doc.token_classes).map_err(|e| format(e.to_string()))?;
    if token_classes.len() != doc.total_len {
        return Err(format(format!(
            "token_classes covers {} tokens, total_len is {}",
            token_classes.len(),
            doc.total_len
        )));
    }
    let n = classes.len();
    if doc.allow.len() != n || doc.allow.iter().any(|r| r.len() != n) {
        return Err(format(format!("allow must be {n} rows of {n} digits")));
    }
    let mut allow = Vec::with_capacity(n * n);
    for row in &doc.allow {
        for ch in row.chars() {
            allow.push(match ch {
                '0' => false,
                '1' => true,
                other => return Err(format(format!("bad allow digit `{other}`"))),
            });
        }
    }
    AttentionMaskArtifact::from_raw(mode, digest, classes, token_classes, allow)
}
