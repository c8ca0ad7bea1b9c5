//! Merkle tree over the sealed bucket tree.
//!
//! Every bucket is a Merkle node. With `H = SHA-256`:
//!
//! ```text
//! leaf bucket:     H(0x00 || record)
//! internal bucket: H(0x01 || record || digest(left child) || digest(right child))
//! ```
//!
//! The client keeps only the root digest. A path read comes with the digests
//! of the L off-path siblings, which is enough to recompute the root.

use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest as _, Sha256};

use crate::error::OramError;
use crate::geometry::{Leaf, TreeGeometry};

pub const DIGEST_SIZE: usize = 32;

pub type Digest = [u8; DIGEST_SIZE];

const LEAF_PREFIX: u8 = 0x00;
const INTERNAL_PREFIX: u8 = 0x01;

pub fn leaf_digest(record: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(record);
    h.finalize().into()
}

pub fn internal_digest(record: &[u8], left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([INTERNAL_PREFIX]);
    h.update(record);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Digest of the node at `index` given its record and, for internal nodes,
/// the digests of its two children.
pub fn node_digest(
    geometry: &TreeGeometry,
    index: u64,
    record: &[u8],
    children: Option<(&Digest, &Digest)>,
) -> Digest {
    if geometry.level_of(index) == geometry.height() {
        leaf_digest(record)
    } else {
        let (left, right) = children.expect("internal node needs child digests");
        internal_digest(record, left, right)
    }
}

/// Root digest implied by the records along the path to `leaf` and the
/// off-path sibling digests (`siblings[l - 1]` is the sibling at level `l`).
pub fn path_root<R: AsRef<[u8]>>(
    geometry: &TreeGeometry,
    leaf: Leaf,
    records: &[R],
    siblings: &[Digest],
) -> Result<Digest, OramError> {
    geometry.check_leaf(leaf)?;
    let height = geometry.height();
    if records.len() != geometry.path_len() || siblings.len() != height as usize {
        return Err(OramError::Request(
            "path or sibling list has the wrong length",
        ));
    }
    let mut digest = leaf_digest(records[height as usize].as_ref());
    for level in (0..height).rev() {
        let child = geometry.bucket_index_unchecked(leaf, level + 1);
        let sibling = &siblings[level as usize];
        let (left, right) = if child % 2 == 1 {
            (&digest, sibling)
        } else {
            (sibling, &digest)
        };
        digest = internal_digest(records[level as usize].as_ref(), left, right);
    }
    Ok(digest)
}

/// Digests of every node of a tree given all records in heap order.
pub fn tree_digests<R: AsRef<[u8]>>(geometry: &TreeGeometry, records: &[R]) -> Vec<Digest> {
    let count = geometry.bucket_count() as usize;
    assert_eq!(records.len(), count, "one record per bucket");
    let mut digests = vec![[0u8; DIGEST_SIZE]; count];
    for index in (0..count).rev() {
        digests[index] = if 2 * index + 2 < count {
            internal_digest(
                records[index].as_ref(),
                &digests[2 * index + 1],
                &digests[2 * index + 2],
            )
        } else {
            leaf_digest(records[index].as_ref())
        };
    }
    digests
}

/// The client's trusted root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MerkleState {
    root: Digest,
}

impl MerkleState {
    pub fn new(root: Digest) -> Self {
        MerkleState { root }
    }

    pub fn root(&self) -> &Digest {
        &self.root
    }

    /// Checks a path read against the trusted root.
    pub fn verify_path<R: AsRef<[u8]>>(
        &self,
        geometry: &TreeGeometry,
        leaf: Leaf,
        records: &[R],
        siblings: &[Digest],
    ) -> Result<(), OramError> {
        let computed = path_root(geometry, leaf, records, siblings)
            .map_err(|_| OramError::Freshness { leaf: leaf.0 })?;
        if computed == self.root {
            Ok(())
        } else {
            Err(OramError::Freshness { leaf: leaf.0 })
        }
    }

    /// Root after replacing the path's records. The siblings must be the ones
    /// verified earlier in the same access; the caller commits the result
    /// with [`MerkleState::commit`] once the write-back is acknowledged.
    pub fn update_path<R: AsRef<[u8]>>(
        &self,
        geometry: &TreeGeometry,
        leaf: Leaf,
        records: &[R],
        siblings: &[Digest],
    ) -> Result<Digest, OramError> {
        path_root(geometry, leaf, records, siblings)
    }

    pub fn commit(&mut self, root: Digest) {
        self.root = root;
    }
}
