//! Packed (layer x slot) retention grid.

/// One layer's retention bits, packed 64 slots per word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitRow {
    len: usize,
    words: Vec<u64>,
}

impl BitRow {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut row = Self::new(len);
        row.set_range(0, len);
        row
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for row of {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for row of {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    /// Sets bits `start..end`; an empty or inverted range is a no-op.
    pub fn set_range(&mut self, start: usize, end: usize) {
        let end = end.min(self.len);
        if start >= end {
            return;
        }
        let (first, last) = (start / 64, (end - 1) / 64);
        for w in first..=last {
            let lo = if w == first { start % 64 } else { 0 };
            let hi = if w == last { (end - 1) % 64 + 1 } else { 64 };
            let width = hi - lo;
            let bits = if width == 64 { u64::MAX } else { ((1u64 << width) - 1) << lo };
            self.words[w] |= bits;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

/// Materialized retention pattern: bit `(layer, slot)` is set when that
/// layer keeps the KV entry at that slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RetentionMask {
    slots: usize,
    rows: Vec<BitRow>,
}

impl RetentionMask {
    /// Builds a mask from per-layer rows, which must all have the same length.
    pub fn from_rows(slots: usize, rows: Vec<BitRow>) -> Self {
        assert!(rows.iter().all(|r| r.len() == slots), "row length mismatch");
        Self { slots, rows }
    }

    pub fn empty(layers: usize, slots: usize) -> Self {
        Self::from_rows(slots, vec![BitRow::new(slots); layers])
    }

    pub fn full(layers: usize, slots: usize) -> Self {
        Self::from_rows(slots, vec![BitRow::ones(slots); layers])
    }

    pub fn from_fn(layers: usize, slots: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let rows = (0..layers)
            .map(|l| {
                let mut row = BitRow::new(slots);
                for s in (0..slots).filter(|&s| f(l, s)) {
                    row.set(s);
                }
                row
            })
            .collect();
        Self::from_rows(slots, rows)
    }

    pub fn layers(&self) -> usize {
        self.rows.len()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    #[inline]
    pub fn get(&self, layer: usize, slot: usize) -> bool {
        self.rows[layer].get(slot)
    }

    pub fn set(&mut self, layer: usize, slot: usize) {
        self.rows[layer].set(slot);
    }

    pub fn row(&self, layer: usize) -> &BitRow {
        &self.rows[layer]
    }

    pub fn rows(&self) -> &[BitRow] {
        &self.rows
    }

    pub fn layer_popcount(&self, layer: usize) -> usize {
        self.rows[layer].count_ones()
    }

    pub fn layer_popcounts(&self) -> Vec<usize> {
        self.rows.iter().map(BitRow::count_ones).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.rows.iter().map(BitRow::count_ones).sum()
    }

    /// Number of layers retaining each slot.
    pub fn per_slot_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.slots];
        for row in &self.rows {
            for s in row.iter_ones() {
                counts[s] += 1;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_range_crosses_words() {
        let mut row = BitRow::new(200);
        row.set_range(60, 130);
        assert_eq!(row.count_ones(), 70);
        assert!(!row.get(59));
        assert!(row.get(60) && row.get(129));
        assert!(!row.get(130));
    }

    #[test]
    fn full_mask_counts() {
        let mask = RetentionMask::full(4, 10);
        assert_eq!(mask.total_cells(), 40);
        assert_eq!(mask.per_slot_counts(), vec![4; 10]);
    }

    proptest! {
        #[test]
        fn range_matches_naive(len in 1usize..300, a in 0usize..300, b in 0usize..300) {
            let mut row = BitRow::new(len);
            row.set_range(a, b);
            let expect: Vec<usize> = (a..b.min(len)).collect();
            prop_assert_eq!(row.iter_ones().collect::<Vec<_>>(), expect);
        }
    }
}
