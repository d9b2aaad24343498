//! Row-major boolean pixel grids.
//!
//! Used for rasterized regions, the derived uncontrolled area and the
//! segmentation masks consumed by the metrics.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitGrid {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitGrid {
    /// All-false grid.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    /// Wraps row-major bits. Returns `None` when the length does not match.
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Half-open rectangle `[x0, x1) × [y0, y1)`, clipped to the grid.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self::from_fn(width, height, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &BitGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixelwise AND. Panics on dimension mismatch.
    pub fn and(&self, other: &BitGrid) -> BitGrid {
        self.zip_with(other, |a, b| a && b)
    }

    /// Pixelwise OR. Panics on dimension mismatch.
    pub fn or(&self, other: &BitGrid) -> BitGrid {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> BitGrid {
        BitGrid {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Count of pixels set in both grids.
    pub fn intersection_count(&self, other: &BitGrid) -> usize {
        assert!(self.same_dims(other), "grid dimension mismatch");
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    /// Grows the grid to `width × height`, filling new pixels with false.
    /// Pixels beyond the new bounds are dropped.
    pub fn padded(&self, width: usize, height: usize) -> BitGrid {
        BitGrid::from_fn(width, height, |x, y| {
            x < self.width && y < self.height && self.get(x, y)
        })
    }

    /// Nearest-neighbour integer upscale.
    pub fn upscaled(&self, factor: usize) -> BitGrid {
        BitGrid::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.get(x / factor, y / factor)
        })
    }

    fn zip_with(&self, other: &BitGrid, f: impl Fn(bool, bool) -> bool) -> BitGrid {
        assert!(self.same_dims(other), "grid dimension mismatch");
        BitGrid {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

impl fmt::Debug for BitGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitGrid({}x{}, {} set)", self.width, self.height, self.count_ones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_counts() {
        let g = BitGrid::rect(64, 64, 0, 0, 32, 64);
        assert_eq!(g.count_ones(), 2048);
        assert_eq!(g.not().count_ones(), 2048);
    }

    #[test]
    fn padding_keeps_content() {
        let g = BitGrid::filled(3, 2, true);
        let p = g.padded(16, 16);
        assert_eq!(p.count_ones(), 6);
        assert!(p.get(2, 1));
        assert!(!p.get(3, 1));
    }

    #[test]
    fn upscale_multiplies_area() {
        let g = BitGrid::rect(4, 4, 1, 1, 3, 2);
        assert_eq!(g.upscaled(3).count_ones(), g.count_ones() * 9);
    }
}
