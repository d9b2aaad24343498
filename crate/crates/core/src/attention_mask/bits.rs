/// Square bit matrix, row = query, column = key. Each row is packed into
/// `ceil(n / 8)` bytes, LSB-first: column `k` lives in byte `k / 8`, bit
/// `k % 8`. Padding bits are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    size: usize,
    row_bytes: usize,
    data: Vec<u8>,
}

impl BitMatrix {
    pub fn new(size: usize) -> Self {
        let row_bytes = size.div_ceil(8);
        Self {
            size,
            row_bytes,
            data: vec![0; row_bytes * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(size);
        for q in 0..size {
            for k in 0..size {
                if f(q, k) {
                    m.set(q, k, true);
                }
            }
        }
        m
    }

    /// Wraps packed rows, rejecting wrong lengths and nonzero padding bits.
    pub fn from_packed(size: usize, data: Vec<u8>) -> Option<Self> {
        let row_bytes = size.div_ceil(8);
        if data.len() != row_bytes * size {
            return None;
        }
        let tail = size % 8;
        if tail != 0 {
            let pad_mask = !((1u8 << tail) - 1);
            if data.chunks(row_bytes).any(|row| row[row_bytes - 1] & pad_mask != 0) {
                return None;
            }
        }
        Some(Self { size, row_bytes, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row_bytes(&self) -> usize {
        self.row_bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, q: usize) -> &[u8] {
        &self.data[q * self.row_bytes..(q + 1) * self.row_bytes]
    }

    #[inline]
    pub fn get(&self, q: usize, k: usize) -> bool {
        self.data[q * self.row_bytes + k / 8] >> (k % 8) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, q: usize, k: usize, value: bool) {
        let byte = &mut self.data[q * self.row_bytes + k / 8];
        if value {
            *byte |= 1 << (k % 8);
        } else {
            *byte &= !(1 << (k % 8));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn row_count(&self, q: usize) -> usize {
        self.row(q).iter().map(|b| b.count_ones() as usize).sum()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.size == other.size && self.data.iter().zip(&other.data).all(|(a, b)| a & !b == 0)
    }
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix({}x{})", self.size, self.size)?;
        for q in 0..self.size.min(64) {
            let row: String = (0..self.size.min(64))
                .map(|k| if self.get(q, k) { '1' } else { '.' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}
