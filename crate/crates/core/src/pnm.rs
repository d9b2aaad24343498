//! Binary netpbm I/O: P5 graymaps for masks, P6 pixmaps for images.

use std::fs;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, RgbImage};

use crate::grid::BitGrid;

/// Gray levels strictly above this threshold are foreground.
pub const MASK_THRESHOLD: u8 = 127;

#[derive(Debug, thiserror::Error)]
pub enum PnmError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("expected a binary {expected} file")]
    WrongKind { expected: &'static str },
    #[error("only 8-bit samples (maxval 255) are supported")]
    UnsupportedDepth,
    #[error("decode failed: {0}")]
    Decode(String),
}

fn decode(bytes: &[u8], magic: &[u8; 2], expected: &'static str) -> Result<DynamicImage, PnmError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(PnmError::WrongKind { expected });
    }
    image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| PnmError::Decode(e.to_string()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PnmError> {
    match decode(bytes, b"P5", "PGM (P5)")? {
        DynamicImage::ImageLuma8(img) => Ok(img),
        _ => Err(PnmError::UnsupportedDepth),
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, PnmError> {
    match decode(bytes, b"P6", "PPM (P6)")? {
        DynamicImage::ImageRgb8(img) => Ok(img),
        _ => Err(PnmError::UnsupportedDepth),
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .expect("in-memory PGM encoding cannot fail");
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .expect("in-memory PPM encoding cannot fail");
    out
}

pub fn gray_to_mask(img: &GrayImage) -> BitGrid {
    BitGrid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0[0] > MASK_THRESHOLD
    })
}

pub fn mask_to_gray(mask: &BitGrid) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

fn read(path: &Path) -> Result<Vec<u8>, PnmError> {
    fs::read(path).map_err(|source| PnmError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_mask(path: &Path) -> Result<BitGrid, PnmError> {
    Ok(gray_to_mask(&decode_pgm(&read(path)?)?))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, PnmError> {
    decode_ppm(&read(path)?)
}

pub fn write_mask(path: &Path, mask: &BitGrid) -> Result<(), PnmError> {
    fs::write(path, encode_pgm(&mask_to_gray(mask))).map_err(|source| PnmError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<(), PnmError> {
    fs::write(path, encode_ppm(img)).map_err(|source| PnmError::Io {
        path: path.display().to_string(),
        source,
    })
}
