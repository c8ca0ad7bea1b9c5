use alloc::collections::btree_map::{self, BTreeMap};

use crate::block::{BlockData, BlockId};

/// Client-side blocks waiting to be evicted into the tree.
///
/// Ordered by id so that iteration, and therefore seeded runs, are
/// deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stash {
    blocks: BTreeMap<BlockId, BlockData>,
}

impl Stash {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn get(&self, id: BlockId) -> Option<&BlockData> {
        self.blocks.get(&id)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, BlockId, BlockData> {
        self.blocks.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.keys().copied()
    }

    /// Inserts a block that must not already be present. Returns `false` and
    /// leaves the stash unchanged on a duplicate.
    pub(crate) fn insert_new(&mut self, id: BlockId, data: BlockData) -> bool {
        match self.blocks.entry(id) {
            btree_map::Entry::Vacant(slot) => {
                slot.insert(data);
                true
            }
            btree_map::Entry::Occupied(_) => false,
        }
    }

    pub(crate) fn get_mut(&mut self, id: BlockId) -> Option<&mut BlockData> {
        self.blocks.get_mut(&id)
    }

    pub(crate) fn remove(&mut self, id: BlockId) -> Option<BlockData> {
        self.blocks.remove(&id)
    }
}

impl FromIterator<(BlockId, BlockData)> for Stash {
    fn from_iter<T: IntoIterator<Item = (BlockId, BlockData)>>(iter: T) -> Self {
        Stash {
            blocks: iter.into_iter().collect(),
        }
    }
}
