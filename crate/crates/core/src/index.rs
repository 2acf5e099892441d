//! Class-partitioned exact nearest-neighbour search over training features.
//!
//! Each class owns a contiguous block of `f32` rows together with the
//! original training indices, stored in ascending index order. Queries scan
//! a block linearly; ties in distance always resolve to the lowest training
//! index. Distances are squared until a caller asks otherwise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use crate::dataset::{check_exact_len, check_magic, read_u64, FeatureDataset};
use crate::distance::squared_distance;
use crate::error::{Error, Result};
use crate::head::LinearHead;

pub const INDEX_MAGIC: [u8; 4] = *b"CFIX";

/// A search hit: original training row and squared Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub sq_distance: f64,
}

impl Neighbour {
    pub fn distance(&self) -> f64 {
        self.sq_distance.sqrt()
    }
}

// Total order on (distance, index) so a max-heap evicts the worst candidate.
#[derive(Clone, Copy)]
struct Ranked(Neighbour);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .sq_distance
            .total_cmp(&other.0.sq_distance)
            .then(self.0.index.cmp(&other.0.index))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassBlock {
    indices: Vec<usize>,
    features: Vec<f32>,
}

impl ClassBlock {
    fn len(&self) -> usize {
        self.indices.len()
    }
}

/// Training pool partitioned by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndex {
    dim: usize,
    source_rows: usize,
    filtered: bool,
    blocks: Vec<ClassBlock>,
}

impl ClassIndex {
    /// Builds the index. With `filter_misclassified`, only rows the head
    /// predicts as their own label are kept.
    pub fn build(ds: &FeatureDataset, head: Option<&LinearHead>, filter_misclassified: bool) -> Result<Self> {
        if filter_misclassified && head.is_none() {
            return Err(Error::Invalid(
                "filtering misclassified rows requires a head".into(),
            ));
        }
        if let Some(h) = head {
            if h.dim() != ds.dim() || h.classes() != ds.classes() {
                return Err(Error::DimensionMismatch(format!(
                    "head is {}x{} but the dataset has c={}, d={}",
                    h.classes(),
                    h.dim(),
                    ds.classes(),
                    ds.dim()
                )));
            }
        }
        let mut blocks = vec![ClassBlock::default(); ds.classes()];
        for i in 0..ds.rows() {
            let row = ds.row(i);
            let label = ds.label(i);
            if filter_misclassified {
                let head = head.expect("checked above");
                if head.predict_unchecked(row) != label {
                    continue;
                }
            }
            let block = &mut blocks[label];
            block.indices.push(i);
            block.features.extend_from_slice(row);
        }
        let index = Self {
            dim: ds.dim(),
            source_rows: ds.rows(),
            filtered: filter_misclassified,
            blocks,
        };
        let empty = index.empty_classes();
        if !empty.is_empty() {
            log::warn!("classes with no eligible training rows: {empty:?}");
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.blocks.len()
    }

    /// Row count of the dataset the index was built from.
    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn is_filtered(&self) -> bool {
        self.filtered
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(ClassBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.blocks.get(class).map_or(0, ClassBlock::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.blocks.iter().map(ClassBlock::len).collect()
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.blocks.len())
            .filter(|&c| self.blocks[c].len() == 0)
            .collect()
    }

    /// Original training indices of class `class`, ascending.
    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.blocks[class].indices
    }

    /// Feature row of the `pos`-th member of class `class`.
    pub fn class_row(&self, class: usize, pos: usize) -> &[f32] {
        &self.blocks[class].features[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Feature row for an original training index, if the row is indexed.
    pub fn row_by_index(&self, class: usize, index: usize) -> Option<&[f32]> {
        let pos = self.blocks.get(class)?.indices.binary_search(&index).ok()?;
        Some(self.class_row(class, pos))
    }

    fn check_query(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "query of length {} for an index of dimension {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn block(&self, class: usize) -> Result<&ClassBlock> {
        match self.blocks.get(class) {
            Some(b) if b.len() > 0 => Ok(b),
            Some(_) => Err(Error::EmptyClass(class)),
            None => Err(Error::Invalid(format!(
                "class {class} is outside 0..{}",
                self.blocks.len()
            ))),
        }
    }

    /// Nearest row of class `class` to `z`.
    pub fn nearest_in_class(&self, z: &[f64], class: usize) -> Result<Neighbour> {
        self.check_query(z)?;
        let block = self.block(class)?;
        let mut best = Neighbour {
            index: usize::MAX,
            sq_distance: f64::INFINITY,
        };
        let mut best_pos = usize::MAX;
        for (pos, row) in block.features.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(z, row);
            // rows are in ascending index order, so strict < keeps the lowest index
            if d < best.sq_distance || best_pos == usize::MAX {
                best = Neighbour {
                    index: block.indices[pos],
                    sq_distance: d,
                };
                best_pos = pos;
            }
        }
        Ok(best)
    }

    /// The `k` nearest rows of class `class`, ascending by (distance, index).
    /// Returns fewer than `k` when the class is smaller.
    pub fn k_nearest_in_class(&self, z: &[f64], class: usize, k: usize) -> Result<Vec<Neighbour>> {
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        self.check_query(z)?;
        let block = self.block(class)?;
        let k = k.min(block.len());
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        for (pos, row) in block.features.chunks_exact(self.dim).enumerate() {
            let cand = Ranked(Neighbour {
                index: block.indices[pos],
                sq_distance: squared_distance(z, row),
            });
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(heap.into_sorted_vec().into_iter().map(|r| r.0).collect())
    }

    /// Squared distance from `z` to its `k`-th closest indexed row, all
    /// classes pooled.
    pub fn kth_nearest_global(&self, z: &[f64], k: usize) -> Result<f64> {
        self.check_query(z)?;
        let rows = self.len();
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if k > rows {
            return Err(Error::KTooLarge { k, rows });
        }
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        for block in &self.blocks {
            for (pos, row) in block.features.chunks_exact(self.dim).enumerate() {
                let cand = Ranked(Neighbour {
                    index: block.indices[pos],
                    sq_distance: squared_distance(z, row),
                });
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("k >= 1") {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap.peek().expect("k >= 1").0.sq_distance)
    }

    /// Serialises the index layout as a `CFIX` cache:
    /// `"CFIX" | c: u64 | d: u64 | n: u64 | filtered: u8 | offsets: u64 * (c+1) | indices: u64 * len`.
    pub fn encode_cache(&self) -> Vec<u8> {
        let c = self.blocks.len();
        let mut out = Vec::with_capacity(29 + 8 * (c + 1 + self.len()));
        out.extend_from_slice(&INDEX_MAGIC);
        out.extend_from_slice(&(c as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.source_rows as u64).to_le_bytes());
        out.push(self.filtered as u8);
        let mut offset = 0u64;
        out.extend_from_slice(&offset.to_le_bytes());
        for b in &self.blocks {
            offset += b.len() as u64;
            out.extend_from_slice(&offset.to_le_bytes());
        }
        for b in &self.blocks {
            for &i in &b.indices {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        out
    }

    /// Rebuilds an index from a `CFIX` cache and the dataset it was built
    /// from. The cache is checked for consistency with the dataset, but the
    /// eligibility of each row is taken on trust.
    pub fn decode_cache(ds: &FeatureDataset, bytes: &[u8]) -> Result<Self> {
        check_magic(bytes, INDEX_MAGIC)?;
        if bytes.len() < 29 {
            return Err(Error::Truncated {
                expected: 29,
                found: bytes.len() as u64,
            });
        }
        let (c, d, n) = (read_u64(bytes, 4), read_u64(bytes, 12), read_u64(bytes, 20));
        let filtered = bytes[28] != 0;
        if (c, d, n) != (ds.classes() as u64, ds.dim() as u64, ds.rows() as u64) {
            return Err(Error::DimensionMismatch(format!(
                "cache built for (c, d, n) = ({c}, {d}, {n}), dataset is ({}, {}, {})",
                ds.classes(),
                ds.dim(),
                ds.rows()
            )));
        }
        let c = c as usize;
        let offsets_end = 29 + 8 * (c + 1);
        if bytes.len() < offsets_end {
            return Err(Error::Truncated {
                expected: offsets_end as u64,
                found: bytes.len() as u64,
            });
        }
        let offsets: Vec<u64> = (0..=c).map(|i| read_u64(bytes, 29 + 8 * i)).collect();
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[1] < w[0]) || offsets[c] > n {
            return Err(Error::Invalid("cache offsets are not monotone".into()));
        }
        check_exact_len(offsets_end as u64 + 8 * offsets[c], bytes.len() as u64)?;
        let mut blocks = Vec::with_capacity(c);
        for class in 0..c {
            let mut block = ClassBlock::default();
            for k in offsets[class]..offsets[class + 1] {
                let i = read_u64(bytes, offsets_end + 8 * k as usize) as usize;
                if i >= ds.rows() || ds.label(i) != class {
                    return Err(Error::Invalid(format!(
                        "cache row {i} does not belong to class {class}"
                    )));
                }
                if block.indices.last().is_some_and(|&last| last >= i) {
                    return Err(Error::Invalid("cache indices are not ascending".into()));
                }
                block.indices.push(i);
                block.features.extend_from_slice(ds.row(i));
            }
            blocks.push(block);
        }
        Ok(Self {
            dim: ds.dim(),
            source_rows: ds.rows(),
            filtered,
            blocks,
        })
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode_cache()).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_cache(ds, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> FeatureDataset {
        // class 0 around the origin, class 1 around (3, 0)
        FeatureDataset::new(
            vec![0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 3.0, 1.0],
            2,
            vec![0, 0, 1, 1],
            2,
            None,
            None,
        )
        .unwrap()
    }

    fn x_split_head() -> LinearHead {
        // logit0 = -x + 1.5, logit1 = x - 1.5
        LinearHead::new(vec![-1.0, 0.0, 1.0, 0.0], vec![1.5, -1.5], 2).unwrap()
    }

    #[test]
    fn all_correct_keeps_everything() {
        let idx = ClassIndex::build(&four_points(), Some(&x_split_head()), true).unwrap();
        assert_eq!(idx.len(), 4);
        assert_eq!(idx.class_counts(), vec![2, 2]);
    }

    #[test]
    fn misclassified_row_is_dropped() {
        let mut labels = four_points().labels().to_vec();
        labels[3] = 0; // (3, 1) labelled 0 but predicted 1
        let ds = FeatureDataset::new(four_points().features().to_vec(), 2, labels, 2, None, None).unwrap();
        let idx = ClassIndex::build(&ds, Some(&x_split_head()), true).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.class_indices(0), &[0, 1]);
        let unfiltered = ClassIndex::build(&ds, Some(&x_split_head()), false).unwrap();
        assert_eq!(unfiltered.len(), ds.rows());
    }

    #[test]
    fn filtering_needs_a_head() {
        assert!(ClassIndex::build(&four_points(), None, true).is_err());
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let ds = FeatureDataset::new(vec![0.0, 0.0, 2.0, 0.0, 9.0, 9.0], 2, vec![0, 0, 1], 2, None, None)
            .unwrap();
        let idx = ClassIndex::build(&ds, None, false).unwrap();
        let hit = idx.nearest_in_class(&[1.0, 0.0], 0).unwrap();
        assert_eq!(hit, Neighbour { index: 0, sq_distance: 1.0 });
        let both = idx.k_nearest_in_class(&[1.0, 0.0], 0, 2).unwrap();
        assert_eq!(both.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn k_is_clamped_and_empty_class_errors() {
        let ds = FeatureDataset::new(vec![0.0, 1.0, 2.0, 5.0], 1, vec![0, 0, 0, 1], 3, None, None).unwrap();
        let idx = ClassIndex::build(&ds, None, false).unwrap();
        assert_eq!(idx.k_nearest_in_class(&[0.0], 0, 5).unwrap().len(), 3);
        assert!(matches!(idx.nearest_in_class(&[0.0], 2), Err(Error::EmptyClass(2))));
        assert!(matches!(idx.k_nearest_in_class(&[0.0], 2, 1), Err(Error::EmptyClass(2))));
        assert_eq!(idx.empty_classes(), vec![2]);
    }

    #[test]
    fn kth_global() {
        // collinear: distances 1, 2, 4 from the query at 0
        let ds = FeatureDataset::new(vec![4.0, 1.0, -2.0], 1, vec![0, 1, 0], 2, None, None).unwrap();
        let idx = ClassIndex::build(&ds, None, false).unwrap();
        assert_eq!(idx.kth_nearest_global(&[0.0], 2).unwrap(), 4.0);
        assert_eq!(idx.kth_nearest_global(&[1.0], 1).unwrap(), 0.0);
        assert!(matches!(idx.kth_nearest_global(&[0.0], 4), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn cache_round_trip() {
        let ds = four_points();
        let idx = ClassIndex::build(&ds, Some(&x_split_head()), true).unwrap();
        let bytes = idx.encode_cache();
        assert_eq!(ClassIndex::decode_cache(&ds, &bytes).unwrap(), idx);
        let mut corrupt = bytes.clone();
        let last = corrupt.len() - 8;
        corrupt[last..].copy_from_slice(&0u64.to_le_bytes());
        assert!(ClassIndex::decode_cache(&ds, &corrupt).is_err());
        assert!(ClassIndex::decode_cache(&ds, &bytes[..bytes.len() - 1]).is_err());
    }
}
