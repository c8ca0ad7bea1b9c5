//! Bucket sealing and the Merkle integrity layer.

mod bucket;
pub mod merkle;
mod seal;

pub use bucket::{PlainBucket, Slot};
pub use merkle::{Digest, MerkleState, DIGEST_SIZE};
pub use seal::{
    record_size, BucketSealer, SealedBucket, SecretKey, KEY_SIZE, NONCE_SIZE, TAG_SIZE,
};
