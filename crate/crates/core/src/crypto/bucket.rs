use alloc::vec::Vec;

use rand_core::RngCore;

use crate::block::{BlockData, BlockId};
use crate::error::OramError;

const FLAG_DUMMY: u8 = 0x00;
const FLAG_REAL: u8 = 0x01;

/// Width of the serialized block id.
pub(crate) const ID_SIZE: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Real(BlockId, BlockData),
    Dummy,
}

/// A decrypted bucket: exactly Z slots, real ones first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainBucket {
    slots: Vec<Slot>,
}

impl PlainBucket {
    pub fn empty(bucket_size: usize) -> Self {
        PlainBucket {
            slots: (0..bucket_size).map(|_| Slot::Dummy).collect(),
        }
    }

    /// Fills a bucket with `blocks` and pads with dummies up to `bucket_size`.
    pub fn with_blocks<I>(bucket_size: usize, blocks: I) -> Result<Self, OramError>
    where
        I: IntoIterator<Item = (BlockId, BlockData)>,
    {
        let mut slots: Vec<Slot> = blocks
            .into_iter()
            .map(|(id, data)| Slot::Real(id, data))
            .collect();
        if slots.len() > bucket_size {
            return Err(OramError::Serialization(
                "more real blocks than bucket slots",
            ));
        }
        slots.resize(bucket_size, Slot::Dummy);
        Ok(PlainBucket { slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// The real blocks, dummies filtered out.
    pub fn real_blocks(&self) -> impl Iterator<Item = (BlockId, &BlockData)> {
        self.slots.iter().filter_map(|slot| match slot {
            Slot::Real(id, data) => Some((*id, data)),
            Slot::Dummy => None,
        })
    }

    pub fn into_real_blocks(self) -> impl Iterator<Item = (BlockId, BlockData)> {
        self.slots.into_iter().filter_map(|slot| match slot {
            Slot::Real(id, data) => Some((id, data)),
            Slot::Dummy => None,
        })
    }

    pub fn real_count(&self) -> usize {
        self.real_blocks().count()
    }

    pub(crate) fn plaintext_len(bucket_size: usize, block_size: usize) -> usize {
        bucket_size * (1 + ID_SIZE + block_size)
    }

    /// Appends the canonical plaintext to `out`: per slot a flag byte, the
    /// little-endian id and the block bytes. Dummy slots carry random filler.
    pub(crate) fn serialize_into<R: RngCore + ?Sized>(
        &self,
        bucket_size: usize,
        block_size: usize,
        out: &mut Vec<u8>,
        rng: &mut R,
    ) -> Result<(), OramError> {
        if self.slots.len() != bucket_size {
            return Err(OramError::Serialization(
                "bucket does not have exactly Z slots",
            ));
        }
        for slot in &self.slots {
            match slot {
                Slot::Real(id, data) => {
                    if data.len() != block_size {
                        return Err(OramError::BlockSize {
                            expected: block_size,
                            actual: data.len(),
                        });
                    }
                    out.push(FLAG_REAL);
                    out.extend_from_slice(&id.0.to_le_bytes());
                    out.extend_from_slice(data.as_bytes());
                }
                Slot::Dummy => {
                    out.push(FLAG_DUMMY);
                    let start = out.len();
                    out.resize(start + ID_SIZE + block_size, 0);
                    rng.fill_bytes(&mut out[start..]);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn deserialize(
        bytes: &[u8],
        bucket_size: usize,
        block_size: usize,
    ) -> Result<Self, OramError> {
        let slot_len = 1 + ID_SIZE + block_size;
        if bytes.len() != bucket_size * slot_len {
            return Err(OramError::Serialization(
                "bucket plaintext has the wrong length",
            ));
        }
        let slots = bytes
            .chunks_exact(slot_len)
            .map(|chunk| match chunk[0] {
                FLAG_REAL => {
                    let mut id = [0u8; ID_SIZE];
                    id.copy_from_slice(&chunk[1..1 + ID_SIZE]);
                    Ok(Slot::Real(
                        BlockId(u64::from_le_bytes(id)),
                        BlockData::from(&chunk[1 + ID_SIZE..]),
                    ))
                }
                FLAG_DUMMY => Ok(Slot::Dummy),
                _ => Err(OramError::Serialization("unknown slot flag")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PlainBucket { slots })
    }
}
