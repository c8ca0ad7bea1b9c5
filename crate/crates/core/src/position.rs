use alloc::vec;
use alloc::vec::Vec;

use crate::block::BlockId;
use crate::geometry::Leaf;

/// Leaf assignment of every block; `None` marks a block that was never
/// accessed and implicitly holds zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositionMap {
    entries: Vec<Option<Leaf>>,
}

impl PositionMap {
    pub fn new(capacity: usize) -> Self {
        PositionMap {
            entries: vec![None; capacity],
        }
    }

    pub fn from_entries(entries: Vec<Option<Leaf>>) -> Self {
        PositionMap { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: BlockId) -> Option<Leaf> {
        self.entries[id.0 as usize]
    }

    pub(crate) fn set(&mut self, id: BlockId, leaf: Option<Leaf>) {
        self.entries[id.0 as usize] = leaf;
    }

    pub fn entries(&self) -> &[Option<Leaf>] {
        &self.entries
    }

    /// Iterates over blocks that have been assigned a leaf.
    pub fn assigned(&self) -> impl Iterator<Item = (BlockId, Leaf)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, leaf)| leaf.map(|l| (BlockId(i as u64), l)))
    }
}
