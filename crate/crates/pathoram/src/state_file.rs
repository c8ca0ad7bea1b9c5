//! Persisted client state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "PORAMCST" (8) | version u8 = 1 | integrity u8 | reserved u16
//! height u32 | bucket size u32 | block size u32 | capacity u64
//! root digest (32 bytes, only when integrity = 1)
//! capacity x position u64 (u64::MAX = never accessed)
//! stash count u64 | stash count x (block id u64, B data bytes), ascending id
//! ```
//!
//! The key and the randomness source are never persisted.

use std::fs;
use std::io::Write;
use std::path::Path;

use pathoram_core::crypto::DIGEST_SIZE;
use pathoram_core::{BlockData, BlockId, ClientState, Leaf, PositionMap, Stash, TreeGeometry};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PORAMCST";
pub const VERSION: u8 = 1;
const NULL_POSITION: u64 = u64::MAX;

pub fn encode(state: &ClientState) -> Vec<u8> {
    let g = &state.geometry;
    let mut out = Vec::with_capacity(
        40 + state.positions.len() * 8 + state.stash.len() * (8 + g.block_size() as usize),
    );
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(state.root.is_some() as u8);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&g.height().to_le_bytes());
    out.extend_from_slice(&g.bucket_size().to_le_bytes());
    out.extend_from_slice(&g.block_size().to_le_bytes());
    out.extend_from_slice(&g.capacity().to_le_bytes());
    if let Some(root) = &state.root {
        out.extend_from_slice(root);
    }
    for entry in state.positions.entries() {
        out.extend_from_slice(&entry.map_or(NULL_POSITION, |l| l.0).to_le_bytes());
    }
    out.extend_from_slice(&(state.stash.len() as u64).to_le_bytes());
    for (id, data) in state.stash.iter() {
        out.extend_from_slice(&id.0.to_le_bytes());
        out.extend_from_slice(data.as_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("state file truncated at byte {}", self.at)))?;
        let slice = &self.bytes[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ClientState> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a client state file (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported state file version {version}"
        )));
    }
    let integrity = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad integrity flag {other}"))),
    };
    r.take(2)?;
    let geometry = TreeGeometry::new(r.u32()?, r.u32()?, r.u32()?, r.u64()?)?;
    let root = if integrity {
        Some(r.take(DIGEST_SIZE)?.try_into().unwrap())
    } else {
        None
    };
    let mut positions = Vec::with_capacity(geometry.capacity() as usize);
    for _ in 0..geometry.capacity() {
        positions.push(match r.u64()? {
            NULL_POSITION => None,
            leaf if leaf < geometry.leaf_count() => Some(Leaf(leaf)),
            leaf => return Err(Error::Format(format!("position {leaf} out of range"))),
        });
    }
    let count = r.u64()?;
    let block_size = geometry.block_size() as usize;
    let mut entries = Vec::new();
    let mut last: Option<u64> = None;
    for _ in 0..count {
        let id = r.u64()?;
        if last.is_some_and(|prev| prev >= id) {
            return Err(Error::Format(
                "stash entries not in ascending id order".into(),
            ));
        }
        last = Some(id);
        entries.push((BlockId(id), BlockData::from(r.take(block_size)?)));
    }
    if r.at != bytes.len() {
        return Err(Error::Format("trailing bytes after stash".into()));
    }
    Ok(ClientState {
        geometry,
        positions: PositionMap::from_entries(positions),
        stash: entries.into_iter().collect::<Stash>(),
        root,
    })
}

/// Writes the state atomically (temporary file, then rename).
pub fn save(path: impl AsRef<Path>, state: &ClientState) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(state))?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ClientState> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_strategy() -> impl Strategy<Value = ClientState> {
        (1u32..5, 1u32..4, 1u32..9, 1u64..20, any::<bool>()).prop_flat_map(
            |(height, z, b, n, integrity)| {
                let leaves = 1u64 << height;
                (
                    proptest::collection::vec(proptest::option::of(0..leaves), n as usize),
                    proptest::collection::vec(any::<u8>(), b as usize),
                    any::<[u8; 32]>(),
                )
                    .prop_map(move |(positions, fill, root)| {
                        let geometry = TreeGeometry::new(height, z, b, n).unwrap();
                        let positions: Vec<_> =
                            positions.into_iter().map(|p| p.map(Leaf)).collect();
                        let stash = positions
                            .iter()
                            .enumerate()
                            .filter(|(i, p)| p.is_some() && i % 2 == 0)
                            .map(|(i, _)| (BlockId(i as u64), BlockData::from(fill.clone())))
                            .collect();
                        ClientState {
                            geometry,
                            positions: PositionMap::from_entries(positions),
                            stash,
                            root: integrity.then_some(root),
                        }
                    })
            },
        )
    }

    proptest! {
        #[test]
        fn encode_decode_identity(state in state_strategy()) {
            let bytes = encode(&state);
            prop_assert_eq!(decode(&bytes).unwrap(), state);
        }

        #[test]
        fn truncation_is_an_error(state in state_strategy(), cut in 1usize..16) {
            let bytes = encode(&state);
            let cut = cut.min(bytes.len());
            prop_assert!(decode(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn exact_layout() {
        let geometry = TreeGeometry::new(1, 1, 2, 2).unwrap();
        let state = ClientState {
            geometry,
            positions: PositionMap::from_entries(vec![Some(Leaf(1)), None]),
            stash: [(BlockId(0), BlockData::from(vec![0xab, 0xcd]))]
                .into_iter()
                .collect(),
            root: None,
        };
        let mut expected = b"PORAMCST".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&u64::MAX.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&0u64.to_le_bytes());
        expected.extend_from_slice(&[0xab, 0xcd]);
        assert_eq!(encode(&state), expected);
    }
}
