//! The untrusted server side: addressed storage of sealed bucket records.
//!
//! A [`BucketStore`] only ever sees leaf indices, fixed-size ciphertext
//! records and Merkle digests. [`TreeStore`] implements the store on top of
//! any flat [`RecordMedium`] and maintains the node digests when integrity is
//! enabled; [`MemoryStore`] is the in-memory instance of it.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::crypto::merkle::{self, Digest, DIGEST_SIZE};
use crate::crypto::{record_size, SealedBucket};
use crate::error::StoreError;
use crate::geometry::{Leaf, TreeGeometry};

/// Parameters a store is created with and a client must match.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreParams {
    pub geometry: TreeGeometry,
    pub integrity: bool,
}

impl StoreParams {
    pub fn new(geometry: TreeGeometry, integrity: bool) -> Self {
        StoreParams {
            geometry,
            integrity,
        }
    }

    pub fn record_size(&self) -> usize {
        record_size(&self.geometry)
    }
}

/// Result of reading one root-to-leaf path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathRead {
    /// Records from the root (position 0) to the leaf bucket.
    pub buckets: Vec<SealedBucket>,
    /// Off-path sibling digests for levels 1..=L, present iff integrity is on.
    pub siblings: Option<Vec<Digest>>,
}

/// Batch path I/O against an untrusted server.
pub trait BucketStore {
    fn params(&self) -> StoreParams;

    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError>;

    /// Replaces the L+1 buckets of the path to `leaf`; `buckets` is ordered
    /// root first.
    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError>;
}

impl<S: BucketStore + ?Sized> BucketStore for &mut S {
    fn params(&self) -> StoreParams {
        (**self).params()
    }
    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        (**self).read_path(leaf)
    }
    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        (**self).write_path(leaf, buckets)
    }
}

impl<S: BucketStore + ?Sized> BucketStore for Box<S> {
    fn params(&self) -> StoreParams {
        (**self).params()
    }
    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        (**self).read_path(leaf)
    }
    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        (**self).write_path(leaf, buckets)
    }
}

/// Full copy of server state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub records: Vec<SealedBucket>,
    pub digests: Option<Vec<Digest>>,
}

/// What a debug overwrite does to the stored Merkle digests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DigestPolicy {
    /// Leave digests as they were: a raw byte tamper.
    Keep,
    /// Recompute digests up to the root, as a server hiding a rollback would.
    Recompute,
}

/// Introspection and fault injection for tests. Only compiled into debug
/// builds or with the `test-hooks` feature.
#[cfg(any(debug_assertions, feature = "test-hooks"))]
pub trait DebugHook {
    fn debug_snapshot(&mut self) -> Result<Snapshot, StoreError>;

    fn debug_overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: DigestPolicy,
    ) -> Result<(), StoreError>;
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
impl<S: DebugHook + ?Sized> DebugHook for &mut S {
    fn debug_snapshot(&mut self) -> Result<Snapshot, StoreError> {
        (**self).debug_snapshot()
    }
    fn debug_overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: DigestPolicy,
    ) -> Result<(), StoreError> {
        (**self).debug_overwrite(index, record, policy)
    }
}

/// A flat array of fixed-size records plus a parallel digest array.
pub trait RecordMedium {
    /// Reads record `index` into `out`, which has the record size.
    fn read_record(&mut self, index: u64, out: &mut [u8]) -> Result<(), StoreError>;
    fn write_record(&mut self, index: u64, record: &[u8]) -> Result<(), StoreError>;
    fn read_digest(&mut self, index: u64) -> Result<Digest, StoreError>;
    fn write_digest(&mut self, index: u64, digest: &Digest) -> Result<(), StoreError>;
    /// Makes preceding writes durable.
    fn flush(&mut self) -> Result<(), StoreError> {
        Ok(())
    }
}

/// Records held in memory.
#[derive(Clone, Debug)]
pub struct MemoryMedium {
    record_size: usize,
    records: Vec<u8>,
    digests: Vec<Digest>,
}

impl MemoryMedium {
    /// Zero-filled records; digests are filled in by [`TreeStore::create`].
    pub fn new(params: &StoreParams) -> Self {
        let count = params.geometry.bucket_count() as usize;
        let record_size = params.record_size();
        MemoryMedium {
            record_size,
            records: vec![0u8; count * record_size],
            digests: if params.integrity {
                vec![[0u8; DIGEST_SIZE]; count]
            } else {
                Vec::new()
            },
        }
    }

    fn span(&self, index: u64) -> core::ops::Range<usize> {
        let start = index as usize * self.record_size;
        start..start + self.record_size
    }
}

impl RecordMedium for MemoryMedium {
    fn read_record(&mut self, index: u64, out: &mut [u8]) -> Result<(), StoreError> {
        let span = self.span(index);
        out.copy_from_slice(&self.records[span]);
        Ok(())
    }

    fn write_record(&mut self, index: u64, record: &[u8]) -> Result<(), StoreError> {
        let span = self.span(index);
        self.records[span].copy_from_slice(record);
        Ok(())
    }

    fn read_digest(&mut self, index: u64) -> Result<Digest, StoreError> {
        Ok(self.digests[index as usize])
    }

    fn write_digest(&mut self, index: u64, digest: &Digest) -> Result<(), StoreError> {
        self.digests[index as usize] = *digest;
        Ok(())
    }
}

/// Per-bucket I/O counters, optionally with an ordered trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub bucket_reads: u64,
    pub bucket_writes: u64,
    pub trace: Option<Vec<IoEvent>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IoEvent {
    Read(u64),
    Write(u64),
}

impl IoStats {
    fn record(&mut self, event: IoEvent) {
        match event {
            IoEvent::Read(_) => self.bucket_reads += 1,
            IoEvent::Write(_) => self.bucket_writes += 1,
        }
        if let Some(trace) = &mut self.trace {
            trace.push(event);
        }
    }
}

/// A [`BucketStore`] over a [`RecordMedium`].
#[derive(Debug)]
pub struct TreeStore<M> {
    params: StoreParams,
    medium: M,
    stats: IoStats,
}

pub type MemoryStore = TreeStore<MemoryMedium>;

impl MemoryStore {
    /// A zero-filled in-memory store. A client formats it before use.
    pub fn new(params: StoreParams) -> Self {
        let medium = MemoryMedium::new(&params);
        TreeStore::create(params, medium).expect("memory medium is infallible")
    }
}

impl<M: RecordMedium> TreeStore<M> {
    /// Wraps a freshly zeroed medium and writes consistent digests for it.
    pub fn create(params: StoreParams, mut medium: M) -> Result<Self, StoreError> {
        if params.integrity {
            let zero = vec![0u8; params.record_size()];
            let height = params.geometry.height();
            // All records are equal, so every node of a level shares a digest.
            let mut digest = merkle::leaf_digest(&zero);
            for level in (0..=height).rev() {
                if level < height {
                    digest = merkle::internal_digest(&zero, &digest, &digest);
                }
                for index in (1u64 << level) - 1..(1u64 << (level + 1)) - 1 {
                    medium.write_digest(index, &digest)?;
                }
            }
            medium.flush()?;
        }
        Ok(Self::open(params, medium))
    }

    /// Wraps a medium that already holds a tree for `params`.
    pub fn open(params: StoreParams, medium: M) -> Self {
        TreeStore {
            params,
            medium,
            stats: IoStats::default(),
        }
    }

    pub fn medium(&self) -> &M {
        &self.medium
    }

    pub fn into_medium(self) -> M {
        self.medium
    }

    pub fn stats(&self) -> &IoStats {
        &self.stats
    }

    /// Resets counters; `trace` turns on the ordered per-bucket event log.
    pub fn reset_stats(&mut self, trace: bool) {
        self.stats = IoStats {
            trace: trace.then(Vec::new),
            ..IoStats::default()
        };
    }

    fn check_index(&self, index: u64) -> Result<(), StoreError> {
        let bucket_count = self.params.geometry.bucket_count();
        if index < bucket_count {
            Ok(())
        } else {
            Err(StoreError::Addressing {
                index,
                bucket_count,
            })
        }
    }

    fn check_leaf(&self, leaf: Leaf) -> Result<(), StoreError> {
        self.params
            .geometry
            .check_leaf(leaf)
            .map_err(|_| StoreError::Addressing {
                index: leaf.0,
                bucket_count: self.params.geometry.bucket_count(),
            })
    }

    /// Reads the records at `indices`, in request order.
    pub fn read_buckets(&mut self, indices: &[u64]) -> Result<Vec<SealedBucket>, StoreError> {
        for &index in indices {
            self.check_index(index)?;
        }
        let size = self.params.record_size();
        let mut out = Vec::with_capacity(indices.len());
        for &index in indices {
            let mut buf = vec![0u8; size];
            self.medium.read_record(index, &mut buf)?;
            self.stats.record(IoEvent::Read(index));
            out.push(SealedBucket::from_bytes(buf));
        }
        Ok(out)
    }

    /// Writes records in the order given. Sizes and indices are validated
    /// before anything is mutated. Digests are not touched.
    pub fn write_buckets(
        &mut self,
        indices: &[u64],
        sealed: &[SealedBucket],
    ) -> Result<(), StoreError> {
        if indices.len() != sealed.len() {
            return Err(StoreError::Framing {
                expected: indices.len(),
                actual: sealed.len(),
            });
        }
        self.validate_records(sealed)?;
        for &index in indices {
            self.check_index(index)?;
        }
        for (&index, record) in indices.iter().zip(sealed) {
            self.medium.write_record(index, record.as_bytes())?;
            self.stats.record(IoEvent::Write(index));
        }
        self.medium.flush()
    }

    fn validate_records(&self, sealed: &[SealedBucket]) -> Result<(), StoreError> {
        let size = self.params.record_size();
        match sealed.iter().find(|r| r.len() != size) {
            Some(bad) => Err(StoreError::Framing {
                expected: size,
                actual: bad.len(),
            }),
            None => Ok(()),
        }
    }

    /// Recomputes the digest of `index` from its record and stored children.
    fn refresh_digest(&mut self, index: u64, record: &[u8]) -> Result<Digest, StoreError> {
        let geometry = self.params.geometry;
        let digest = if geometry.level_of(index) == geometry.height() {
            merkle::leaf_digest(record)
        } else {
            let left = self.medium.read_digest(2 * index + 1)?;
            let right = self.medium.read_digest(2 * index + 2)?;
            merkle::internal_digest(record, &left, &right)
        };
        self.medium.write_digest(index, &digest)?;
        Ok(digest)
    }

    #[cfg(any(debug_assertions, feature = "test-hooks"))]
    fn snapshot(&mut self) -> Result<Snapshot, StoreError> {
        let size = self.params.record_size();
        let count = self.params.geometry.bucket_count();
        let mut records = Vec::with_capacity(count as usize);
        for index in 0..count {
            let mut buf = vec![0u8; size];
            self.medium.read_record(index, &mut buf)?;
            records.push(SealedBucket::from_bytes(buf));
        }
        let digests = if self.params.integrity {
            Some(
                (0..count)
                    .map(|i| self.medium.read_digest(i))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        Ok(Snapshot { records, digests })
    }

    #[cfg(any(debug_assertions, feature = "test-hooks"))]
    fn overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: DigestPolicy,
    ) -> Result<(), StoreError> {
        self.check_index(index)?;
        if record.len() != self.params.record_size() {
            return Err(StoreError::Framing {
                expected: self.params.record_size(),
                actual: record.len(),
            });
        }
        self.medium.write_record(index, record)?;
        if self.params.integrity && policy == DigestPolicy::Recompute {
            let mut node = index;
            let mut buf = record.to_vec();
            loop {
                self.refresh_digest(node, &buf)?;
                if node == 0 {
                    break;
                }
                node = (node - 1) / 2;
                self.medium.read_record(node, &mut buf)?;
            }
        }
        self.medium.flush()
    }
}

impl<M: RecordMedium> BucketStore for TreeStore<M> {
    fn params(&self) -> StoreParams {
        self.params
    }

    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        self.check_leaf(leaf)?;
        let geometry = self.params.geometry;
        let path: Vec<u64> = (0..=geometry.height())
            .map(|level| geometry.bucket_index_unchecked(leaf, level))
            .collect();
        let buckets = self.read_buckets(&path)?;
        let siblings = if self.params.integrity {
            Some(
                (1..=geometry.height())
                    .map(|level| {
                        self.medium
                            .read_digest(geometry.sibling_unchecked(leaf, level))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        Ok(PathRead { buckets, siblings })
    }

    /// Applies the records leaf first, refreshing digests on the way up.
    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        self.check_leaf(leaf)?;
        let geometry = self.params.geometry;
        if buckets.len() != geometry.path_len() {
            return Err(StoreError::Framing {
                expected: geometry.path_len(),
                actual: buckets.len(),
            });
        }
        self.validate_records(&buckets)?;
        for level in (0..=geometry.height()).rev() {
            let index = geometry.bucket_index_unchecked(leaf, level);
            let record = buckets[level as usize].as_bytes();
            self.medium.write_record(index, record)?;
            self.stats.record(IoEvent::Write(index));
            if self.params.integrity {
                self.refresh_digest(index, record)?;
            }
        }
        self.medium.flush()
    }
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
impl<M: RecordMedium> DebugHook for TreeStore<M> {
    fn debug_snapshot(&mut self) -> Result<Snapshot, StoreError> {
        self.snapshot()
    }

    fn debug_overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: DigestPolicy,
    ) -> Result<(), StoreError> {
        self.overwrite(index, record, policy)
    }
}

/// Which path operation the server observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOp {
    Read,
    Write,
}

/// Passes requests through to `inner` and logs every revealed leaf: the
/// server's entire view of the access pattern.
#[derive(Debug)]
pub struct RecordingStore<S> {
    inner: S,
    log: Vec<(PathOp, Leaf)>,
}

impl<S> RecordingStore<S> {
    pub fn new(inner: S) -> Self {
        RecordingStore {
            inner,
            log: Vec::new(),
        }
    }

    pub fn log(&self) -> &[(PathOp, Leaf)] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<(PathOp, Leaf)> {
        core::mem::take(&mut self.log)
    }

    /// Leaves of all path reads, in order.
    pub fn read_leaves(&self) -> impl Iterator<Item = Leaf> + '_ {
        self.log
            .iter()
            .filter(|(op, _)| *op == PathOp::Read)
            .map(|&(_, leaf)| leaf)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: BucketStore> BucketStore for RecordingStore<S> {
    fn params(&self) -> StoreParams {
        self.inner.params()
    }

    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        self.log.push((PathOp::Read, leaf));
        self.inner.read_path(leaf)
    }

    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        self.log.push((PathOp::Write, leaf));
        self.inner.write_path(leaf, buckets)
    }
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
impl<S: DebugHook> DebugHook for RecordingStore<S> {
    fn debug_snapshot(&mut self) -> Result<Snapshot, StoreError> {
        self.inner.debug_snapshot()
    }

    fn debug_overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: DigestPolicy,
    ) -> Result<(), StoreError> {
        self.inner.debug_overwrite(index, record, policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(height: u32, integrity: bool) -> StoreParams {
        StoreParams::new(TreeGeometry::new(height, 2, 8, 4).unwrap(), integrity)
    }

    fn record(params: &StoreParams, fill: u8) -> SealedBucket {
        SealedBucket::from_bytes(vec![fill; params.record_size()])
    }

    #[test]
    fn fresh_store_reads_zero_records() {
        let p = params(2, false);
        let mut store = MemoryStore::new(p);
        let read = store.read_path(Leaf(3)).unwrap();
        assert_eq!(read.buckets.len(), 3);
        assert!(read.siblings.is_none());
        assert!(read
            .buckets
            .iter()
            .all(|b| b.as_bytes().iter().all(|&x| x == 0)));
    }

    #[test]
    fn write_read_round_trip_and_disjointness() {
        let p = params(2, false);
        let mut store = MemoryStore::new(p);
        let recs: Vec<_> = (1..=3).map(|i| record(&p, i)).collect();
        store.write_path(Leaf(0), recs.clone()).unwrap();
        assert_eq!(store.read_path(Leaf(0)).unwrap().buckets, recs);
        // Path to leaf 3 is [0, 2, 6]; only the root was touched.
        let other = store.read_buckets(&[2, 6]).unwrap();
        assert!(other.iter().all(|b| b.as_bytes().iter().all(|&x| x == 0)));
        assert_eq!(store.read_buckets(&[0]).unwrap()[0], recs[0]);
    }

    #[test]
    fn write_order_is_leaf_to_root() {
        let p = params(3, false);
        let mut store = MemoryStore::new(p);
        store.reset_stats(true);
        store
            .write_path(Leaf(6), (0..4).map(|i| record(&p, i)).collect())
            .unwrap();
        let trace = store.stats().trace.clone().unwrap();
        let expected: Vec<_> = p
            .geometry
            .path(Leaf(6))
            .unwrap()
            .into_iter()
            .rev()
            .map(IoEvent::Write)
            .collect();
        assert_eq!(trace, expected);
    }

    #[test]
    fn framing_errors_leave_state_untouched() {
        let p = params(2, true);
        let mut store = MemoryStore::new(p);
        let before = store.debug_snapshot().unwrap();
        let mut recs: Vec<_> = (0..3).map(|i| record(&p, i + 1)).collect();
        recs[2] = SealedBucket::from_bytes(vec![9; p.record_size() + 1]);
        assert!(matches!(
            store.write_path(Leaf(1), recs),
            Err(StoreError::Framing { .. })
        ));
        let short: Vec<_> = (0..2).map(|i| record(&p, i)).collect();
        assert!(store.write_path(Leaf(1), short).is_err());
        assert!(matches!(
            store.read_path(Leaf(4)),
            Err(StoreError::Addressing { .. })
        ));
        assert!(matches!(
            store.read_buckets(&[7]),
            Err(StoreError::Addressing { .. })
        ));
        assert_eq!(store.debug_snapshot().unwrap(), before);
    }

    #[test]
    fn digests_track_full_rehash() {
        let p = params(3, true);
        let mut store = MemoryStore::new(p);
        let snap = store.debug_snapshot().unwrap();
        assert_eq!(
            snap.digests.unwrap(),
            merkle::tree_digests(&p.geometry, &snap.records)
        );
        for (i, leaf) in [5u64, 0, 7, 5, 2].into_iter().enumerate() {
            let recs = (0..4).map(|l| record(&p, (i * 4 + l) as u8)).collect();
            store.write_path(Leaf(leaf), recs).unwrap();
        }
        let snap = store.debug_snapshot().unwrap();
        let digests = snap.digests.clone().unwrap();
        assert_eq!(digests, merkle::tree_digests(&p.geometry, &snap.records));
        assert_eq!(snap.records.len() as u64, p.geometry.bucket_count());

        let read = store.read_path(Leaf(5)).unwrap();
        let root = merkle::path_root(&p.geometry, Leaf(5), &read.buckets, &read.siblings.unwrap())
            .unwrap();
        assert_eq!(root, digests[0]);
    }

    #[test]
    fn overwrite_policies() {
        let p = params(2, true);
        let mut store = MemoryStore::new(p);
        let before = store.debug_snapshot().unwrap();
        store
            .debug_overwrite(4, record(&p, 0xaa).as_bytes(), DigestPolicy::Keep)
            .unwrap();
        let kept = store.debug_snapshot().unwrap();
        assert_eq!(kept.digests, before.digests);
        store
            .debug_overwrite(4, record(&p, 0xbb).as_bytes(), DigestPolicy::Recompute)
            .unwrap();
        let snap = store.debug_snapshot().unwrap();
        assert_eq!(
            snap.digests.unwrap(),
            merkle::tree_digests(&p.geometry, &snap.records)
        );
    }

    #[test]
    fn recording_store_logs_leaves() {
        let p = params(2, false);
        let mut store = RecordingStore::new(MemoryStore::new(p));
        store.read_path(Leaf(2)).unwrap();
        store
            .write_path(Leaf(2), (0..3).map(|_| record(&p, 1)).collect())
            .unwrap();
        assert_eq!(
            store.log(),
            &[(PathOp::Read, Leaf(2)), (PathOp::Write, Leaf(2))]
        );
        assert_eq!(store.read_leaves().collect::<Vec<_>>(), vec![Leaf(2)]);
    }
}
