use alloc::string::String;
use core::fmt;

/// Failures reported by a [`BucketStore`](crate::store::BucketStore).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoreError {
    /// Bucket index outside `[0, bucket_count)`.
    Addressing { index: u64, bucket_count: u64 },
    /// A record or batch does not have the size the store was created with.
    Framing { expected: usize, actual: usize },
    /// Local I/O failure of a persistent backend.
    Io(String),
    /// Connection loss or a malformed byte stream.
    Transport(String),
    /// Well-formed frames carrying something the peer did not expect.
    Protocol(String),
    /// Parameter or version negotiation failed.
    Handshake(String),
    /// The debug hook is not compiled in or not enabled.
    DebugDisabled,
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::Addressing {
                index,
                bucket_count,
            } => write!(
                f,
                "bucket index {index} out of range (bucket count {bucket_count})"
            ),
            StoreError::Framing { expected, actual } => {
                write!(f, "framing error: expected {expected} bytes, got {actual}")
            }
            StoreError::Io(msg) => write!(f, "storage I/O error: {msg}"),
            StoreError::Transport(msg) => write!(f, "transport error: {msg}"),
            StoreError::Protocol(msg) => write!(f, "protocol error: {msg}"),
            StoreError::Handshake(msg) => write!(f, "handshake error: {msg}"),
            StoreError::DebugDisabled => f.write_str("debug hook is disabled"),
        }
    }
}

/// Errors surfaced by the ORAM engine and its building blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OramError {
    /// Invalid instance parameters.
    Config(&'static str),
    /// A store or persisted state disagrees with the client's parameters.
    ParameterMismatch {
        field: &'static str,
        expected: u64,
        actual: u64,
    },
    LeafOutOfRange {
        leaf: u64,
        leaf_count: u64,
    },
    LevelOutOfRange {
        level: u32,
        height: u32,
    },
    BlockIdOutOfRange {
        id: u64,
        capacity: u64,
    },
    BlockSize {
        expected: usize,
        actual: usize,
    },
    /// Malformed access request; no state was changed.
    Request(&'static str),
    Serialization(&'static str),
    /// A bucket failed authenticated decryption.
    Integrity {
        bucket: u64,
    },
    /// The recomputed Merkle root of a path does not match the trusted root.
    Freshness {
        leaf: u64,
    },
    /// Server state violates the block-location invariant.
    Corruption {
        reason: &'static str,
        block: u64,
    },
    Store(StoreError),
    /// A previous access failed; call `reconnect` before continuing.
    Failed,
}

impl fmt::Display for OramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OramError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            OramError::ParameterMismatch {
                field,
                expected,
                actual,
            } => write!(
                f,
                "parameter mismatch on {field}: expected {expected}, found {actual}"
            ),
            OramError::LeafOutOfRange { leaf, leaf_count } => {
                write!(f, "leaf {leaf} out of range (leaf count {leaf_count})")
            }
            OramError::LevelOutOfRange { level, height } => {
                write!(f, "level {level} out of range (height {height})")
            }
            OramError::BlockIdOutOfRange { id, capacity } => {
                write!(f, "block id {id} out of range (capacity {capacity})")
            }
            OramError::BlockSize { expected, actual } => {
                write!(f, "block must be {expected} bytes, got {actual}")
            }
            OramError::Request(msg) => write!(f, "malformed request: {msg}"),
            OramError::Serialization(msg) => write!(f, "serialization error: {msg}"),
            OramError::Integrity { bucket } => {
                write!(f, "integrity check failed for bucket {bucket}")
            }
            OramError::Freshness { leaf } => {
                write!(f, "merkle root mismatch on the path to leaf {leaf}")
            }
            OramError::Corruption { reason, block } => {
                write!(f, "server state corrupted ({reason}) at block {block}")
            }
            OramError::Store(err) => err.fmt(f),
            OramError::Failed => f.write_str("client is in a failed state; reconnect first"),
        }
    }
}

impl From<StoreError> for OramError {
    fn from(err: StoreError) -> Self {
        OramError::Store(err)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for StoreError {}

#[cfg(feature = "std")]
impl std::error::Error for OramError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            OramError::Store(err) => Some(err),
            _ => None,
        }
    }
}
