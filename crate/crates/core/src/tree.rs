//! Server tree geometry.
//!
//! The server tree is a complete binary tree of depth `k` (levels
//! `0..k-1`, `2^k - 1` internal buckets) whose `2^(k-1)` lowest nodes each
//! carry `2^(L-k+1)` leaf buckets. Leaf buckets form level `k`, so every
//! path has exactly `k + 1` buckets.
//!
//! Buckets are stored contiguously: internal buckets in heap order at
//! indices `[0, 2^k - 1)`, then the leaf bucket of leaf `x` at
//! `2^k - 1 + x`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TreeShape {
    levels: u32,
    k: u32,
    pub internal_node_count: u64,
    pub leaf_bucket_count: u64,
    pub total_buckets: u64,
    pub path_length_buckets: usize,
    pub leaf_fanout: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BucketId {
    pub index: u64,
    pub level: u32,
}

impl TreeShape {
    pub fn new(levels: u32, k: u32) -> Result<Self> {
        if levels == 0 || levels > crate::params::MAX_LEVELS || k == 0 || k > levels {
            return Err(Error::domain(format!("invalid tree shape L={levels} k={k}")));
        }
        let internal = (1u64 << k) - 1;
        let leaves = 1u64 << levels;
        Ok(TreeShape {
            levels,
            k,
            internal_node_count: internal,
            leaf_bucket_count: leaves,
            total_buckets: internal + leaves,
            path_length_buckets: k as usize + 1,
            leaf_fanout: 1u64 << (levels - k + 1),
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.leaf_bucket_count
    }

    fn check_leaf(&self, leaf: u64) -> Result<()> {
        if leaf >= self.n() {
            return Err(Error::domain(format!("leaf {leaf} out of range [0, {})", self.n())));
        }
        Ok(())
    }

    /// Position of `leaf`'s internal parent among the `2^(k-1)` nodes at level `k-1`.
    fn parent_slot(&self, leaf: u64) -> u64 {
        leaf >> (self.levels - self.k + 1)
    }

    fn internal(&self, level: u32, slot_at_bottom: u64) -> BucketId {
        let slot = slot_at_bottom >> (self.k - 1 - level);
        BucketId { index: (1u64 << level) - 1 + slot, level }
    }

    pub fn leaf_bucket(&self, leaf: u64) -> Result<BucketId> {
        self.check_leaf(leaf)?;
        Ok(BucketId { index: self.internal_node_count + leaf, level: self.k })
    }

    /// Buckets of `P(leaf)`, root first.
    pub fn path_buckets(&self, leaf: u64) -> Result<Vec<BucketId>> {
        self.check_leaf(leaf)?;
        let slot = self.parent_slot(leaf);
        let mut path: Vec<BucketId> = (0..self.k).map(|level| self.internal(level, slot)).collect();
        path.push(BucketId { index: self.internal_node_count + leaf, level: self.k });
        Ok(path)
    }

    /// Level of the deepest bucket shared by `P(x)` and `P(z)`.
    pub fn common_level(&self, x: u64, z: u64) -> Result<u32> {
        self.check_leaf(x)?;
        self.check_leaf(z)?;
        Ok(self.common_level_unchecked(x, z))
    }

    #[inline]
    pub(crate) fn common_level_unchecked(&self, x: u64, z: u64) -> u32 {
        if x == z {
            return self.k;
        }
        let diff = self.parent_slot(x) ^ self.parent_slot(z);
        let differing_bits = u64::BITS - diff.leading_zeros();
        self.k - 1 - differing_bits
    }

    pub fn lowest_common_bucket(&self, x: u64, z: u64) -> Result<BucketId> {
        let level = self.common_level(x, z)?;
        if level == self.k {
            return self.leaf_bucket(x);
        }
        Ok(self.internal(level, self.parent_slot(x)))
    }

    /// Every leaf whose path contains `bucket`.
    pub fn leaves_under(&self, bucket: BucketId) -> std::ops::Range<u64> {
        if bucket.level == self.k {
            let leaf = bucket.index - self.internal_node_count;
            return leaf..leaf + 1;
        }
        let slot = bucket.index + 1 - (1u64 << bucket.level);
        let span = 1u64 << (self.levels - bucket.level);
        slot * span..(slot + 1) * span
    }
}

pub fn derive_tree_shape(params: &Params) -> TreeShape {
    TreeShape::new(params.levels(), params.k()).expect("validated params always yield a shape")
}
