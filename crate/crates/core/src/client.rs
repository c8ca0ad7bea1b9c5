//! The trusted client engine.
//!
//! Every [`OramClient::access`] does the same four things regardless of the
//! request: remap the block to a fresh uniform leaf, read the whole path to
//! its previous leaf into the stash, apply the update, then write the path
//! back leaf first, placing each stash block as deep as its own leaf allows.
//!
//! At the end of each access, every block with an assigned leaf is either in
//! the stash or in exactly one bucket on the path to that leaf.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::block::{BlockData, BlockId};
use crate::crypto::merkle::{self, Digest};
use crate::crypto::{BucketSealer, MerkleState, PlainBucket, SealedBucket, SecretKey};
use crate::error::OramError;
use crate::geometry::{Leaf, TreeGeometry};
use crate::position::PositionMap;
use crate::stash::Stash;
use crate::store::{BucketStore, StoreParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Read,
    Write,
}

/// One logical request. Reads carry no data; writes carry exactly B bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessRequest {
    pub op: Op,
    pub id: BlockId,
    pub data: Option<BlockData>,
}

impl AccessRequest {
    pub fn read(id: u64) -> Self {
        AccessRequest {
            op: Op::Read,
            id: BlockId(id),
            data: None,
        }
    }

    pub fn write(id: u64, data: impl Into<BlockData>) -> Self {
        AccessRequest {
            op: Op::Write,
            id: BlockId(id),
            data: Some(data.into()),
        }
    }
}

/// Everything a client needs to resume a session, except the key and the
/// randomness source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientState {
    pub geometry: TreeGeometry,
    pub positions: PositionMap,
    pub stash: Stash,
    /// Trusted Merkle root; present iff integrity is enabled.
    pub root: Option<Digest>,
}

/// A sealed write-back that was sent but not acknowledged.
#[derive(Clone, Debug)]
struct PendingWrite {
    leaf: Leaf,
    buckets: Vec<SealedBucket>,
    root: Option<Digest>,
}

pub struct OramClient<S, R> {
    geometry: TreeGeometry,
    sealer: BucketSealer,
    store: S,
    rng: R,
    positions: PositionMap,
    stash: Stash,
    merkle: Option<MerkleState>,
    failed: bool,
    pending: Option<PendingWrite>,
    #[cfg(any(debug_assertions, feature = "test-hooks"))]
    remap_disabled: bool,
}

impl<S: BucketStore, R: RngCore + CryptoRng> OramClient<S, R> {
    /// Formats `store` with sealed all-dummy buckets and returns a client
    /// with an empty stash and an all-null position map.
    ///
    /// Every leaf path is written once, so every bucket holds a fresh dummy
    /// record. The Merkle root is computed locally from the records the
    /// client produced, never taken from the server.
    pub fn format(
        geometry: TreeGeometry,
        key: &SecretKey,
        mut store: S,
        integrity: bool,
        mut rng: R,
    ) -> Result<Self, OramError> {
        check_params(&geometry, integrity, &store.params())?;
        let sealer = BucketSealer::new(key, &geometry);
        let empty = PlainBucket::empty(geometry.bucket_size() as usize);
        let mut latest: Vec<Option<SealedBucket>> = if integrity {
            vec![None; geometry.bucket_count() as usize]
        } else {
            Vec::new()
        };
        for leaf in 0..geometry.leaf_count() {
            let leaf = Leaf(leaf);
            let mut buckets = vec![SealedBucket::from_bytes(Vec::new()); geometry.path_len()];
            for level in (0..=geometry.height()).rev() {
                let index = geometry.bucket_index_unchecked(leaf, level);
                buckets[level as usize] = sealer.seal(index, &empty, &mut rng)?;
            }
            if integrity {
                for (level, bucket) in buckets.iter().enumerate() {
                    let index = geometry.bucket_index_unchecked(leaf, level as u32);
                    latest[index as usize] = Some(bucket.clone());
                }
            }
            store.write_path(leaf, buckets)?;
        }
        let merkle = if integrity {
            let records: Vec<SealedBucket> = latest
                .into_iter()
                .map(|r| r.expect("every bucket lies on some path"))
                .collect();
            Some(MerkleState::new(
                merkle::tree_digests(&geometry, &records)[0],
            ))
        } else {
            None
        };
        Ok(Self::assemble(
            geometry,
            sealer,
            store,
            rng,
            PositionMap::new(geometry.capacity() as usize),
            Stash::new(),
            merkle,
        ))
    }

    /// Resumes a session against a store that holds the matching tree.
    pub fn resume(
        state: ClientState,
        key: &SecretKey,
        store: S,
        rng: R,
    ) -> Result<Self, OramError> {
        let geometry = state.geometry;
        check_params(&geometry, state.root.is_some(), &store.params())?;
        if state.positions.len() as u64 != geometry.capacity() {
            return Err(OramError::ParameterMismatch {
                field: "position map length",
                expected: geometry.capacity(),
                actual: state.positions.len() as u64,
            });
        }
        for (id, data) in state.stash.iter() {
            if id.0 >= geometry.capacity() || state.positions.get(*id).is_none() {
                return Err(OramError::Corruption {
                    reason: "stash entry without a position",
                    block: id.0,
                });
            }
            if data.len() != geometry.block_size() as usize {
                return Err(OramError::BlockSize {
                    expected: geometry.block_size() as usize,
                    actual: data.len(),
                });
            }
        }
        if let Some((_, leaf)) = state
            .positions
            .assigned()
            .find(|(_, leaf)| leaf.0 >= geometry.leaf_count())
        {
            return Err(OramError::LeafOutOfRange {
                leaf: leaf.0,
                leaf_count: geometry.leaf_count(),
            });
        }
        Ok(Self::assemble(
            geometry,
            BucketSealer::new(key, &geometry),
            store,
            rng,
            state.positions,
            state.stash,
            state.root.map(MerkleState::new),
        ))
    }

    fn assemble(
        geometry: TreeGeometry,
        sealer: BucketSealer,
        store: S,
        rng: R,
        positions: PositionMap,
        stash: Stash,
        merkle: Option<MerkleState>,
    ) -> Self {
        OramClient {
            geometry,
            sealer,
            store,
            rng,
            positions,
            stash,
            merkle,
            failed: false,
            pending: None,
            #[cfg(any(debug_assertions, feature = "test-hooks"))]
            remap_disabled: false,
        }
    }

    pub fn read(&mut self, id: u64) -> Result<BlockData, OramError> {
        self.access(AccessRequest::read(id))
    }

    /// Writes `data` and returns the block's previous contents.
    pub fn write(&mut self, id: u64, data: impl Into<BlockData>) -> Result<BlockData, OramError> {
        self.access(AccessRequest::write(id, data))
    }

    /// Performs one oblivious access. Reads return the block's data; writes
    /// return the data the block held before the write.
    ///
    /// Malformed requests are rejected without touching any state. Any other
    /// error leaves the client failed until [`OramClient::reconnect`].
    pub fn access(&mut self, request: AccessRequest) -> Result<BlockData, OramError> {
        if self.failed {
            return Err(OramError::Failed);
        }
        self.validate(&request)?;
        let id = request.id;

        let previous = self.positions.get(id);
        let fresh = self.next_leaf(previous);
        self.positions.set(id, Some(fresh));
        // A never-accessed block is nowhere in the tree: read an independent
        // random path instead.
        let path_leaf = match previous {
            Some(leaf) => leaf,
            None => self.geometry.sample_leaf(&mut self.rng),
        };

        let (fetched, siblings) = match self.fetch_path(path_leaf, id, previous) {
            Ok(read) => read,
            Err(err) => {
                self.positions.set(id, previous);
                self.failed = true;
                return Err(err);
            }
        };
        for (block, data) in fetched {
            let inserted = self.stash.insert_new(block, data);
            debug_assert!(inserted, "duplicates are rejected while fetching");
        }

        let prior = match (previous, self.stash.get_mut(id)) {
            (Some(_), Some(data)) => match request.data {
                Some(new) => core::mem::replace(data, new),
                None => data.clone(),
            },
            (None, None) => {
                let zero = BlockData::zeroed(self.geometry.block_size() as usize);
                let stored = request.data.unwrap_or_else(|| zero.clone());
                self.stash.insert_new(id, stored);
                zero
            }
            (Some(_), None) => {
                self.failed = true;
                return Err(OramError::Corruption {
                    reason: "block missing from its path and the stash",
                    block: id.0,
                });
            }
            (None, Some(_)) => unreachable!("fetch rejects never-accessed blocks"),
        };

        match self.write_back(path_leaf, siblings) {
            Ok(()) => Ok(prior),
            Err(err) => {
                self.failed = true;
                Err(err)
            }
        }
    }

    fn write_back(&mut self, leaf: Leaf, siblings: Option<Vec<Digest>>) -> Result<(), OramError> {
        let buckets = self.evict(leaf)?;
        let root = match (&self.merkle, &siblings) {
            (Some(state), Some(siblings)) => {
                Some(state.update_path(&self.geometry, leaf, &buckets, siblings)?)
            }
            _ => None,
        };
        self.pending = Some(PendingWrite {
            leaf,
            buckets,
            root,
        });
        self.flush_pending()
    }

    fn validate(&self, request: &AccessRequest) -> Result<(), OramError> {
        if request.id.0 >= self.geometry.capacity() {
            return Err(OramError::BlockIdOutOfRange {
                id: request.id.0,
                capacity: self.geometry.capacity(),
            });
        }
        match (request.op, &request.data) {
            (Op::Read, Some(_)) => Err(OramError::Request("read must not carry data")),
            (Op::Write, None) => Err(OramError::Request("write requires data")),
            (Op::Write, Some(data)) if data.len() != self.geometry.block_size() as usize => {
                Err(OramError::BlockSize {
                    expected: self.geometry.block_size() as usize,
                    actual: data.len(),
                })
            }
            _ => Ok(()),
        }
    }

    fn next_leaf(&mut self, previous: Option<Leaf>) -> Leaf {
        #[cfg(any(debug_assertions, feature = "test-hooks"))]
        if self.remap_disabled {
            if let Some(leaf) = previous {
                return leaf;
            }
        }
        let _ = previous;
        self.geometry.sample_leaf(&mut self.rng)
    }

    /// Reads, authenticates and decrypts the path to `leaf`. Nothing is
    /// merged into client state here, so a failure leaves the stash intact.
    #[allow(clippy::type_complexity)]
    fn fetch_path(
        &mut self,
        leaf: Leaf,
        accessed: BlockId,
        accessed_leaf: Option<Leaf>,
    ) -> Result<(Vec<(BlockId, BlockData)>, Option<Vec<Digest>>), OramError> {
        let read = self.store.read_path(leaf)?;
        if read.buckets.len() != self.geometry.path_len() {
            return Err(OramError::Corruption {
                reason: "path read returned the wrong number of buckets",
                block: leaf.0,
            });
        }
        let siblings = match &self.merkle {
            Some(state) => {
                let siblings = read.siblings.ok_or(OramError::Freshness { leaf: leaf.0 })?;
                state.verify_path(&self.geometry, leaf, &read.buckets, &siblings)?;
                Some(siblings)
            }
            None => None,
        };

        let mut fetched: Vec<(BlockId, BlockData)> = Vec::new();
        for (level, sealed) in read.buckets.iter().enumerate() {
            let level = level as u32;
            let index = self.geometry.bucket_index_unchecked(leaf, level);
            let bucket = self.sealer.open(index, sealed)?;
            for (id, data) in bucket.into_real_blocks() {
                if id.0 >= self.geometry.capacity() {
                    return Err(OramError::Corruption {
                        reason: "block id out of range",
                        block: id.0,
                    });
                }
                let mapped = if id == accessed {
                    accessed_leaf
                } else {
                    self.positions.get(id)
                };
                let on_path = mapped
                    .map(|m| self.geometry.shared_depth(m, leaf) >= level)
                    .unwrap_or(false);
                if !on_path {
                    return Err(OramError::Corruption {
                        reason: "block stored off its mapped path",
                        block: id.0,
                    });
                }
                if self.stash.contains(id) || fetched.iter().any(|(other, _)| *other == id) {
                    return Err(OramError::Corruption {
                        reason: "duplicate block",
                        block: id.0,
                    });
                }
                fetched.push((id, data));
            }
        }
        Ok((fetched, siblings))
    }

    /// Fills the path to `leaf` from the stash, deepest level first, and
    /// seals it. Returns the records ordered root first.
    fn evict(&mut self, leaf: Leaf) -> Result<Vec<SealedBucket>, OramError> {
        let height = self.geometry.height();
        let capacity = self.geometry.bucket_size() as usize;

        // A block may go into the level-l bucket iff its own path shares that
        // bucket, i.e. iff l <= shared depth of the two leaves.
        let mut by_depth: Vec<Vec<BlockId>> = vec![Vec::new(); height as usize + 1];
        for id in self.stash.ids() {
            let mapped = self.positions.get(id).expect("stashed blocks have a leaf");
            by_depth[self.geometry.shared_depth(mapped, leaf) as usize].push(id);
        }

        let mut eligible: Vec<BlockId> = Vec::new();
        let mut buckets = vec![SealedBucket::from_bytes(Vec::new()); height as usize + 1];
        for level in (0..=height).rev() {
            eligible.append(&mut by_depth[level as usize]);
            let take = eligible.len().min(capacity);
            let mut chosen = Vec::with_capacity(take);
            for _ in 0..take {
                let pick = uniform_below(&mut self.rng, eligible.len());
                let id = eligible.swap_remove(pick);
                let data = self.stash.remove(id).expect("eligible blocks are stashed");
                chosen.push((id, data));
            }
            let bucket = PlainBucket::with_blocks(capacity, chosen)?;
            let index = self.geometry.bucket_index_unchecked(leaf, level);
            buckets[level as usize] = self.sealer.seal(index, &bucket, &mut self.rng)?;
        }
        Ok(buckets)
    }

    fn flush_pending(&mut self) -> Result<(), OramError> {
        let Some(pending) = self.pending.take() else {
            return Ok(());
        };
        match self.store.write_path(pending.leaf, pending.buckets.clone()) {
            Ok(()) => {
                if let (Some(state), Some(root)) = (&mut self.merkle, pending.root) {
                    state.commit(root);
                }
                Ok(())
            }
            Err(err) => {
                self.pending = Some(pending);
                self.failed = true;
                Err(err.into())
            }
        }
    }

    /// Swaps in a fresh connection to the same server state, re-sends an
    /// unacknowledged write-back and clears the failed state. The next
    /// access re-verifies the server against the trusted root.
    pub fn reconnect(&mut self, store: S) -> Result<S, OramError> {
        check_params(&self.geometry, self.merkle.is_some(), &store.params())?;
        let old = core::mem::replace(&mut self.store, store);
        self.flush_pending()?;
        self.failed = false;
        Ok(old)
    }

    pub fn geometry(&self) -> &TreeGeometry {
        &self.geometry
    }

    pub fn stash(&self) -> &Stash {
        &self.stash
    }

    pub fn stash_len(&self) -> usize {
        self.stash.len()
    }

    pub fn positions(&self) -> &PositionMap {
        &self.positions
    }

    pub fn merkle_root(&self) -> Option<&Digest> {
        self.merkle.as_ref().map(MerkleState::root)
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut S {
        &mut self.store
    }

    pub fn into_store(self) -> S {
        self.store
    }

    /// Snapshot of the resumable state. Fails while a write-back is pending.
    pub fn export_state(&self) -> Result<ClientState, OramError> {
        if self.failed || self.pending.is_some() {
            return Err(OramError::Failed);
        }
        Ok(ClientState {
            geometry: self.geometry,
            positions: self.positions.clone(),
            stash: self.stash.clone(),
            root: self.merkle.map(|m| *m.root()),
        })
    }

    /// Negative control for the obliviousness tests: keep blocks on their
    /// first leaf forever.
    #[cfg(any(debug_assertions, feature = "test-hooks"))]
    pub fn set_remap_disabled(&mut self, disabled: bool) {
        self.remap_disabled = disabled;
    }
}

fn check_params(
    geometry: &TreeGeometry,
    integrity: bool,
    params: &StoreParams,
) -> Result<(), OramError> {
    let theirs = &params.geometry;
    let fields = [
        ("height", geometry.height() as u64, theirs.height() as u64),
        (
            "bucket size",
            geometry.bucket_size() as u64,
            theirs.bucket_size() as u64,
        ),
        (
            "block size",
            geometry.block_size() as u64,
            theirs.block_size() as u64,
        ),
        ("capacity", geometry.capacity(), theirs.capacity()),
        ("integrity", integrity as u64, params.integrity as u64),
    ];
    for (field, expected, actual) in fields {
        if expected != actual {
            return Err(OramError::ParameterMismatch {
                field,
                expected,
                actual,
            });
        }
    }
    Ok(())
}

/// Uniform integer in `[0, n)` by rejection sampling.
fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return (x % n) as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{MemoryStore, RecordingStore};
    use alloc::collections::BTreeMap;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn client(
        height: u32,
        z: u32,
        b: u32,
        n: u64,
        integrity: bool,
        seed: u64,
    ) -> OramClient<MemoryStore, ChaCha20Rng> {
        let geometry = TreeGeometry::new(height, z, b, n).unwrap();
        let store = MemoryStore::new(StoreParams::new(geometry, integrity));
        let key = SecretKey::from_bytes([1u8; 32]);
        OramClient::format(
            geometry,
            &key,
            store,
            integrity,
            ChaCha20Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn fresh_client_state() {
        let c = client(3, 4, 16, 8, true, 0);
        assert_eq!(c.stash_len(), 0);
        assert!(c.positions().entries().iter().all(Option::is_none));
        assert!(c.merkle_root().is_some());
    }

    #[test]
    fn write_then_read() {
        let mut c = client(3, 4, 16, 8, false, 1);
        assert_eq!(c.read(7).unwrap(), BlockData::zeroed(16));
        assert_eq!(c.write(7, vec![9u8; 16]).unwrap(), BlockData::zeroed(16));
        assert_eq!(c.read(7).unwrap().as_bytes(), &[9u8; 16]);
        assert_eq!(c.write(7, vec![3u8; 16]).unwrap().as_bytes(), &[9u8; 16]);
        assert_eq!(c.read(7).unwrap().as_bytes(), &[3u8; 16]);
    }

    #[test]
    fn small_tree_differential() {
        let mut c = client(2, 1, 8, 4, true, 2);
        let mut oracle: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..50 {
            let id = rng.next_u64() % 4;
            if rng.next_u32() % 2 == 0 {
                let data: Vec<u8> = (0..8).map(|_| rng.next_u32() as u8).collect();
                let prior = c.write(id, data.clone()).unwrap();
                let expected = oracle.insert(id, data).unwrap_or_else(|| vec![0u8; 8]);
                assert_eq!(prior.as_bytes(), &expected[..]);
            } else {
                let got = c.read(id).unwrap();
                let expected = oracle.get(&id).cloned().unwrap_or_else(|| vec![0u8; 8]);
                assert_eq!(got.as_bytes(), &expected[..]);
            }
        }
    }

    #[test]
    fn malformed_requests_change_nothing() {
        let mut c = client(2, 2, 8, 4, false, 3);
        c.write(1, vec![1u8; 8]).unwrap();
        let before = c.export_state().unwrap();
        assert!(matches!(
            c.read(4),
            Err(OramError::BlockIdOutOfRange { .. })
        ));
        assert!(matches!(
            c.write(0, vec![1u8; 7]),
            Err(OramError::BlockSize { .. })
        ));
        let bad = AccessRequest {
            op: Op::Read,
            id: BlockId(0),
            data: Some(BlockData::zeroed(8)),
        };
        assert!(matches!(c.access(bad), Err(OramError::Request(_))));
        let bad = AccessRequest {
            op: Op::Write,
            id: BlockId(0),
            data: None,
        };
        assert!(matches!(c.access(bad), Err(OramError::Request(_))));
        assert_eq!(c.export_state().unwrap(), before);
        assert!(!c.is_failed());
    }

    #[test]
    fn revealed_leaf_is_previous_position() {
        let geometry = TreeGeometry::new(4, 4, 8, 16).unwrap();
        let store = RecordingStore::new(MemoryStore::new(StoreParams::new(geometry, false)));
        let key = SecretKey::from_bytes([2u8; 32]);
        let mut c = OramClient::format(geometry, &key, store, false, ChaCha20Rng::seed_from_u64(5))
            .unwrap();
        c.store_mut().take_log();
        c.read(3).unwrap();
        for _ in 0..20 {
            let expected = c.positions().get(BlockId(3)).unwrap();
            c.store_mut().take_log();
            c.read(3).unwrap();
            let log = c.store_mut().take_log();
            assert_eq!(log.len(), 2);
            assert!(log.iter().all(|&(_, leaf)| leaf == expected));
        }
    }

    #[test]
    fn parameter_mismatch_rejected() {
        let geometry = TreeGeometry::new(3, 4, 16, 8).unwrap();
        let other = TreeGeometry::new(3, 4, 32, 8).unwrap();
        let key = SecretKey::from_bytes([0u8; 32]);
        let rng = ChaCha20Rng::seed_from_u64(0);
        let err = OramClient::format(
            geometry,
            &key,
            MemoryStore::new(StoreParams::new(other, false)),
            false,
            rng.clone(),
        )
        .err()
        .unwrap();
        assert_eq!(
            err,
            OramError::ParameterMismatch {
                field: "block size",
                expected: 16,
                actual: 32
            }
        );
        assert!(OramClient::format(
            geometry,
            &key,
            MemoryStore::new(StoreParams::new(geometry, true)),
            false,
            rng,
        )
        .is_err());
    }

    #[test]
    fn resume_continues_session() {
        let mut c = client(3, 2, 8, 8, true, 9);
        for id in 0..8 {
            c.write(id, vec![id as u8; 8]).unwrap();
        }
        let state = c.export_state().unwrap();
        let store = c.into_store();
        let key = SecretKey::from_bytes([1u8; 32]);
        let mut resumed =
            OramClient::resume(state, &key, store, ChaCha20Rng::seed_from_u64(10)).unwrap();
        for id in 0..8 {
            assert_eq!(resumed.read(id).unwrap().as_bytes(), &[id as u8; 8]);
        }
    }

    #[test]
    fn uniform_below_covers_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut seen = [false; 5];
        for _ in 0..200 {
            seen[uniform_below(&mut rng, 5)] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(uniform_below(&mut rng, 1), 0);
    }
}
