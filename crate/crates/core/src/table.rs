use serde::{Deserialize, Serialize};

/// Strictly upper-triangular table indexed by `0 ≤ m1 < m2 ≤ m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    size: usize,
    data: Vec<f64>,
}

impl PairTable {
    /// Table for `size` candidates, i.e. `m_max = size - 1`.
    pub fn new(size: usize) -> Self {
        PairTable {
            size,
            data: vec![0.0; size * size.saturating_sub(1) / 2],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut table = Self::new(size);
        for m1 in 0..size {
            for m2 in m1 + 1..size {
                table.set(m1, m2, f(m1, m2));
            }
        }
        table
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pairs(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn index(&self, m1: usize, m2: usize) -> usize {
        debug_assert!(
            m1 < m2 && m2 < self.size,
            "bad pair ({m1}, {m2}) for size {}",
            self.size
        );
        // rows m1 = 0..: row r holds size-1-r entries
        m1 * (2 * self.size - m1 - 1) / 2 + (m2 - m1 - 1)
    }

    #[inline]
    pub fn get(&self, m1: usize, m2: usize) -> f64 {
        self.data[self.index(m1, m2)]
    }

    #[inline]
    pub fn set(&mut self, m1: usize, m2: usize, value: f64) {
        let i = self.index(m1, m2);
        self.data[i] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PairTable {
        PairTable {
            size: self.size,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}
