//! Path ORAM: a trusted client that reads and writes fixed-size blocks on an
//! untrusted server holding a binary tree of encrypted buckets, such that the
//! server only ever sees uniformly random root-to-leaf paths.
//!
//! This crate is `no_std` (with `alloc`) and contains the whole protocol:
//! tree geometry, bucket sealing, the Merkle integrity layer, the store
//! abstraction with an in-memory backend, and the client engine. IO-bound
//! backends, the wire protocol and the experiment harness live in the
//! `pathoram` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod block;
pub mod client;
pub mod crypto;
pub mod error;
pub mod geometry;
pub mod position;
pub mod stash;
pub mod store;

pub use block::{BlockData, BlockId};
pub use client::{AccessRequest, ClientState, Op, OramClient};
pub use crypto::{BucketSealer, Digest, MerkleState, PlainBucket, SealedBucket, SecretKey, Slot};
pub use error::{OramError, StoreError};
pub use geometry::{Leaf, TreeGeometry};
pub use position::PositionMap;
pub use stash::Stash;
pub use store::{BucketStore, MemoryStore, PathRead, RecordingStore, StoreParams, TreeStore};

#[cfg(any(debug_assertions, feature = "test-hooks"))]
pub use store::{DebugHook, DigestPolicy};
