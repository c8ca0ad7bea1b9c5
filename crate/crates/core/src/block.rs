use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a logical block, in `[0, N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {}", self.0)
    }
}

/// Contents of one logical block. Always exactly B bytes once it has been
/// accepted by a client.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BlockData(Vec<u8>);

impl BlockData {
    /// The default content of a block that was never written.
    pub fn zeroed(block_size: usize) -> Self {
        BlockData(vec![0u8; block_size])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }
}

impl From<Vec<u8>> for BlockData {
    fn from(bytes: Vec<u8>) -> Self {
        BlockData(bytes)
    }
}

impl From<&[u8]> for BlockData {
    fn from(bytes: &[u8]) -> Self {
        BlockData(bytes.to_vec())
    }
}

impl AsRef<[u8]> for BlockData {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for BlockData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "BlockData({} bytes: ", self.0.len())?;
        for b in self.0.iter().take(SHOWN) {
            write!(f, "{b:02x}")?;
        }
        if self.0.len() > SHOWN {
            f.write_str("..")?;
        }
        f.write_str(")")
    }
}
