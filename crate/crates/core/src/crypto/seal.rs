//! Fixed-size randomized bucket records.
//!
//! Record layout, for a geometry with Z slots of B bytes:
//!
//! ```text
//! nonce (12) || ChaCha20-Poly1305 ciphertext (Z * (9 + B)) || tag (16)
//! ```
//!
//! The bucket index is bound as associated data (8 bytes, little-endian), so
//! a record moved to another position fails to open.

use alloc::vec::Vec;
use core::fmt;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand_core::{CryptoRng, RngCore};

use super::bucket::PlainBucket;
use crate::error::OramError;
use crate::geometry::TreeGeometry;

pub const KEY_SIZE: usize = 32;
pub const NONCE_SIZE: usize = 12;
pub const TAG_SIZE: usize = 16;

/// Size in bytes of every sealed bucket record for this geometry.
pub fn record_size(geometry: &TreeGeometry) -> usize {
    NONCE_SIZE
        + PlainBucket::plaintext_len(
            geometry.bucket_size() as usize,
            geometry.block_size() as usize,
        )
        + TAG_SIZE
}

/// Client-held symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_SIZE]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_SIZE]) -> Self {
        SecretKey(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_SIZE];
        rng.fill_bytes(&mut bytes);
        SecretKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_SIZE] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// An encrypted bucket as the server stores it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SealedBucket(Vec<u8>);

impl SealedBucket {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        SealedBucket(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for SealedBucket {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SealedBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SealedBucket({} bytes)", self.0.len())
    }
}

/// Seals and opens buckets of one geometry under one key.
#[derive(Clone)]
pub struct BucketSealer {
    cipher: ChaCha20Poly1305,
    bucket_size: usize,
    block_size: usize,
    record_size: usize,
}

impl BucketSealer {
    pub fn new(key: &SecretKey, geometry: &TreeGeometry) -> Self {
        BucketSealer {
            cipher: ChaCha20Poly1305::new(Key::from_slice(key.as_bytes())),
            bucket_size: geometry.bucket_size() as usize,
            block_size: geometry.block_size() as usize,
            record_size: record_size(geometry),
        }
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    /// Encrypts `bucket` for position `index` with a fresh random nonce.
    pub fn seal<R: RngCore + CryptoRng + ?Sized>(
        &self,
        index: u64,
        bucket: &PlainBucket,
        rng: &mut R,
    ) -> Result<SealedBucket, OramError> {
        let mut out = Vec::with_capacity(self.record_size);
        out.resize(NONCE_SIZE, 0);
        rng.fill_bytes(&mut out[..NONCE_SIZE]);
        bucket.serialize_into(self.bucket_size, self.block_size, &mut out, rng)?;

        let (nonce, body) = out.split_at_mut(NONCE_SIZE);
        let tag = self
            .cipher
            .encrypt_in_place_detached(Nonce::from_slice(nonce), &index.to_le_bytes(), body)
            .map_err(|_| OramError::Serialization("encryption failed"))?;
        out.extend_from_slice(tag.as_slice());
        debug_assert_eq!(out.len(), self.record_size);
        Ok(SealedBucket(out))
    }

    /// Authenticates and decrypts the record stored at `index`. No plaintext
    /// is released unless the tag verifies.
    pub fn open(&self, index: u64, sealed: &SealedBucket) -> Result<PlainBucket, OramError> {
        let bytes = sealed.as_bytes();
        if bytes.len() != self.record_size {
            return Err(OramError::Integrity { bucket: index });
        }
        let (nonce, rest) = bytes.split_at(NONCE_SIZE);
        let (body, tag) = rest.split_at(rest.len() - TAG_SIZE);
        let mut plain = body.to_vec();
        self.cipher
            .decrypt_in_place_detached(
                Nonce::from_slice(nonce),
                &index.to_le_bytes(),
                &mut plain,
                Tag::from_slice(tag),
            )
            .map_err(|_| OramError::Integrity { bucket: index })?;
        PlainBucket::deserialize(&plain, self.bucket_size, self.block_size)
            .map_err(|_| OramError::Integrity { bucket: index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{BlockData, BlockId};
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (BucketSealer, TreeGeometry, ChaCha20Rng) {
        let geometry = TreeGeometry::new(3, 4, 32, 8).unwrap();
        let key = SecretKey::from_bytes([7u8; KEY_SIZE]);
        (
            BucketSealer::new(&key, &geometry),
            geometry,
            ChaCha20Rng::seed_from_u64(11),
        )
    }

    fn two_block_bucket() -> PlainBucket {
        PlainBucket::with_blocks(
            4,
            vec![
                (BlockId(3), BlockData::from(vec![0xaa; 32])),
                (BlockId(5), BlockData::from(vec![0x55; 32])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let (sealer, _, mut rng) = setup();
        let bucket = two_block_bucket();
        let sealed = sealer.seal(4, &bucket, &mut rng).unwrap();
        assert_eq!(sealer.open(4, &sealed).unwrap(), bucket);

        let empty = PlainBucket::empty(4);
        let sealed = sealer.seal(0, &empty, &mut rng).unwrap();
        let opened = sealer.open(0, &sealed).unwrap();
        assert_eq!(opened.slots().len(), 4);
        assert_eq!(opened.real_count(), 0);
    }

    #[test]
    fn randomized_and_fixed_size() {
        let (sealer, geometry, mut rng) = setup();
        let bucket = two_block_bucket();
        let a = sealer.seal(1, &bucket, &mut rng).unwrap();
        let b = sealer.seal(1, &bucket, &mut rng).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.len(), b.len());
        let full = PlainBucket::with_blocks(4, (0..4).map(|i| (BlockId(i), BlockData::zeroed(32))))
            .unwrap();
        let empty = PlainBucket::empty(4);
        assert_eq!(
            sealer.seal(1, &full, &mut rng).unwrap().len(),
            sealer.seal(1, &empty, &mut rng).unwrap().len()
        );
        assert_eq!(a.len(), record_size(&geometry));
        assert_eq!(a.len(), 12 + 4 * (1 + 8 + 32) + 16);
    }

    #[test]
    fn reseals_are_distinct() {
        let (sealer, _, mut rng) = setup();
        let bucket = two_block_bucket();
        let seen: BTreeSet<Vec<u8>> = (0..1000)
            .map(|_| sealer.seal(2, &bucket, &mut rng).unwrap().into_bytes())
            .collect();
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn tamper_and_wrong_key_detected() {
        let (sealer, geometry, mut rng) = setup();
        let sealed = sealer.seal(9, &two_block_bucket(), &mut rng).unwrap();
        for pos in [0, 12, 50, sealed.len() - 1] {
            let mut bad = sealed.clone();
            bad.as_bytes_mut()[pos] ^= 0x01;
            assert_eq!(
                sealer.open(9, &bad),
                Err(OramError::Integrity { bucket: 9 })
            );
        }
        let other = BucketSealer::new(&SecretKey::from_bytes([8u8; KEY_SIZE]), &geometry);
        assert_eq!(
            other.open(9, &sealed),
            Err(OramError::Integrity { bucket: 9 })
        );
        // Relocated record.
        assert_eq!(
            sealer.open(10, &sealed),
            Err(OramError::Integrity { bucket: 10 })
        );
        let short = SealedBucket::from_bytes(sealed.as_bytes()[1..].to_vec());
        assert!(sealer.open(9, &short).is_err());
    }

    #[test]
    fn malformed_slot_sizes_rejected() {
        let (sealer, _, mut rng) = setup();
        let bad = PlainBucket::with_blocks(4, vec![(BlockId(0), BlockData::zeroed(31))]).unwrap();
        assert!(sealer.seal(0, &bad, &mut rng).is_err());
        let wrong_slots = PlainBucket::empty(3);
        assert!(sealer.seal(0, &wrong_slots, &mut rng).is_err());
    }
}
