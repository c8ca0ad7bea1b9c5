use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;

use pathoram_core::store::{IoStats, PathRead};
use pathoram_core::{BucketStore, Leaf, MemoryStore, SealedBucket, StoreError, StoreParams};

use crate::error::{Error, Result};
use crate::file_store::{self, FileStore};
use crate::net::{spawn_loopback, RemoteStore};

/// Backend selection as written on the command line:
/// `memory`, `file:<dir>`, `remote:<host:port>` or `loopback`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Memory,
    /// Directory holding one tree file per experiment cell.
    File(PathBuf),
    Remote(String),
    /// An in-process memory daemon on 127.0.0.1, one per store.
    Loopback,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "memory" => Ok(BackendKind::Memory),
            None if s == "loopback" => Ok(BackendKind::Loopback),
            Some(("file", path)) if !path.is_empty() => Ok(BackendKind::File(path.into())),
            Some(("remote", addr)) if !addr.is_empty() => Ok(BackendKind::Remote(addr.into())),
            _ => Err(Error::Usage(format!(
                "unknown backend {s:?} (expected memory, file:<dir>, remote:<addr> or loopback)"
            ))),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Memory => f.write_str("memory"),
            BackendKind::File(p) => write!(f, "file:{}", p.display()),
            BackendKind::Remote(a) => write!(f, "remote:{a}"),
            BackendKind::Loopback => f.write_str("loopback"),
        }
    }
}

/// Any of the available stores behind one type.
#[derive(Debug)]
pub enum AnyStore {
    Memory(MemoryStore),
    File(FileStore),
    Remote(RemoteStore),
}

impl AnyStore {
    pub fn memory(params: StoreParams) -> Self {
        AnyStore::Memory(MemoryStore::new(params))
    }

    /// Opens a fresh store of the given kind. `name` distinguishes tree files
    /// of different cells inside a `file:` directory.
    pub fn open(kind: &BackendKind, params: StoreParams, name: &str) -> Result<Self> {
        Ok(match kind {
            BackendKind::Memory => AnyStore::memory(params),
            BackendKind::File(dir) => {
                std::fs::create_dir_all(dir)?;
                AnyStore::File(file_store::create(
                    dir.join(format!("{name}.tree")),
                    params,
                )?)
            }
            BackendKind::Remote(addr) => {
                AnyStore::Remote(RemoteStore::connect(addr.as_str(), params)?)
            }
            BackendKind::Loopback => {
                let (addr, handle) = spawn_loopback(params, true)?;
                // The daemon thread exits once this store's connection closes.
                drop::<thread::JoinHandle<_>>(handle);
                AnyStore::Remote(RemoteStore::connect(addr, params)?)
            }
        })
    }

    /// Per-bucket counters of local stores.
    pub fn stats(&self) -> Option<&IoStats> {
        match self {
            AnyStore::Memory(s) => Some(s.stats()),
            AnyStore::File(s) => Some(s.stats()),
            AnyStore::Remote(_) => None,
        }
    }
}

impl BucketStore for AnyStore {
    fn params(&self) -> StoreParams {
        match self {
            AnyStore::Memory(s) => s.params(),
            AnyStore::File(s) => s.params(),
            AnyStore::Remote(s) => s.params(),
        }
    }

    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        match self {
            AnyStore::Memory(s) => s.read_path(leaf),
            AnyStore::File(s) => s.read_path(leaf),
            AnyStore::Remote(s) => s.read_path(leaf),
        }
    }

    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        match self {
            AnyStore::Memory(s) => s.write_path(leaf, buckets),
            AnyStore::File(s) => s.write_path(leaf, buckets),
            AnyStore::Remote(s) => s.write_path(leaf, buckets),
        }
    }
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
impl pathoram_core::DebugHook for AnyStore {
    fn debug_snapshot(&mut self) -> Result<pathoram_core::store::Snapshot, StoreError> {
        match self {
            AnyStore::Memory(s) => s.debug_snapshot(),
            AnyStore::File(s) => s.debug_snapshot(),
            AnyStore::Remote(s) => s.debug_snapshot(),
        }
    }

    fn debug_overwrite(
        &mut self,
        index: u64,
        record: &[u8],
        policy: pathoram_core::DigestPolicy,
    ) -> Result<(), StoreError> {
        match self {
            AnyStore::Memory(s) => s.debug_overwrite(index, record, policy),
            AnyStore::File(s) => s.debug_overwrite(index, record, policy),
            AnyStore::Remote(s) => s.debug_overwrite(index, record, policy),
        }
    }
}
