//! Add-only static feature vectors: boolean string-presence features where an
//! attack may only flip bits on (adding strings to a binary is easy; removing
//! the originals is not).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const DEFAULT_STATIC_DIM: usize = 20_000;

/// Fixed-length boolean feature vector plus the set of indices the attack
/// has flipped on. Original 1-bits are never cleared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticFeatureVector {
    pub dim: usize,
    /// Indices set in the original sample.
    pub bits: BTreeSet<u32>,
    /// Indices flipped 0 -> 1 by the attack; disjoint from `bits`.
    #[serde(default)]
    pub added: BTreeSet<u32>,
}

impl StaticFeatureVector {
    pub fn new(dim: usize, bits: BTreeSet<u32>) -> Self {
        Self { dim, bits, added: BTreeSet::new() }
    }

    pub fn is_set(&self, idx: u32) -> bool {
        self.bits.contains(&idx) || self.added.contains(&idx)
    }

    /// Flips a zero bit on. Flipping an original bit is a no-op (it is
    /// already set); out-of-range indices are ignored by callers' choice of
    /// pool, so this asserts in debug builds only.
    pub fn add_bit(&mut self, idx: u32) {
        debug_assert!((idx as usize) < self.dim);
        if !self.bits.contains(&idx) {
            self.added.insert(idx);
        }
    }

    pub fn remove_added(&mut self, idx: u32) {
        self.added.remove(&idx);
    }

    /// Every set index, original and added.
    pub fn active_indices(&self) -> Vec<u32> {
        self.bits.union(&self.added).copied().collect()
    }

    pub fn added_count(&self) -> usize {
        self.added.len()
    }
}
