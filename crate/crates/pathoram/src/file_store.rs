//! File-backed bucket store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     8  magic "PORAMTRE"
//!      8     1  format version (1)
//!      9     1  integrity flag (0 or 1)
//!     10     2  reserved, zero
//!     12     4  height L
//!     16     4  bucket size Z
//!     20     4  block size B
//!     24     8  capacity N
//!     32     4  record size
//!     36     4  digest size (32 with integrity, else 0)
//!     40    24  reserved, zero
//!     64     -  bucket_count records of `record size` bytes, heap order
//!      -     -  with integrity: bucket_count digests of 32 bytes, heap order
//! ```

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use pathoram_core::crypto::{Digest, DIGEST_SIZE};
use pathoram_core::store::{RecordMedium, TreeStore};
use pathoram_core::{StoreError, StoreParams, TreeGeometry};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PORAMTRE";
pub const VERSION: u8 = 1;
pub const HEADER_SIZE: u64 = 64;

pub type FileStore = TreeStore<FileMedium>;

#[derive(Debug)]
pub struct FileMedium {
    file: File,
    record_size: u64,
    digest_offset: u64,
    sync: bool,
}

fn io_err(err: std::io::Error) -> StoreError {
    StoreError::Io(err.to_string())
}

impl FileMedium {
    fn seek(&mut self, offset: u64) -> Result<(), StoreError> {
        self.file
            .seek(SeekFrom::Start(offset))
            .map(drop)
            .map_err(io_err)
    }

    /// Request `fdatasync` after every batch instead of a plain flush.
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }
}

impl RecordMedium for FileMedium {
    fn read_record(&mut self, index: u64, out: &mut [u8]) -> Result<(), StoreError> {
        self.seek(HEADER_SIZE + index * self.record_size)?;
        self.file.read_exact(out).map_err(io_err)
    }

    fn write_record(&mut self, index: u64, record: &[u8]) -> Result<(), StoreError> {
        self.seek(HEADER_SIZE + index * self.record_size)?;
        self.file.write_all(record).map_err(io_err)
    }

    fn read_digest(&mut self, index: u64) -> Result<Digest, StoreError> {
        let mut digest = [0u8; DIGEST_SIZE];
        self.seek(self.digest_offset + index * DIGEST_SIZE as u64)?;
        self.file.read_exact(&mut digest).map_err(io_err)?;
        Ok(digest)
    }

    fn write_digest(&mut self, index: u64, digest: &Digest) -> Result<(), StoreError> {
        self.seek(self.digest_offset + index * DIGEST_SIZE as u64)?;
        self.file.write_all(digest).map_err(io_err)
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        self.file.flush().map_err(io_err)?;
        if self.sync {
            self.file.sync_data().map_err(io_err)?;
        }
        Ok(())
    }
}

fn encode_header(params: &StoreParams) -> [u8; HEADER_SIZE as usize] {
    let g = &params.geometry;
    let mut h = [0u8; HEADER_SIZE as usize];
    h[0..8].copy_from_slice(MAGIC);
    h[8] = VERSION;
    h[9] = params.integrity as u8;
    h[12..16].copy_from_slice(&g.height().to_le_bytes());
    h[16..20].copy_from_slice(&g.bucket_size().to_le_bytes());
    h[20..24].copy_from_slice(&g.block_size().to_le_bytes());
    h[24..32].copy_from_slice(&g.capacity().to_le_bytes());
    h[32..36].copy_from_slice(&(params.record_size() as u32).to_le_bytes());
    let digest_size = if params.integrity {
        DIGEST_SIZE as u32
    } else {
        0
    };
    h[36..40].copy_from_slice(&digest_size.to_le_bytes());
    h
}

fn decode_header(h: &[u8; HEADER_SIZE as usize]) -> Result<StoreParams> {
    let u32_at = |at: usize| u32::from_le_bytes(h[at..at + 4].try_into().unwrap());
    if &h[0..8] != MAGIC {
        return Err(Error::Format("not a bucket tree file (bad magic)".into()));
    }
    if h[8] != VERSION {
        return Err(Error::Format(format!(
            "unsupported tree file version {}",
            h[8]
        )));
    }
    let integrity = match h[9] {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad integrity flag {other}"))),
    };
    let capacity = u64::from_le_bytes(h[24..32].try_into().unwrap());
    let geometry = TreeGeometry::new(u32_at(12), u32_at(16), u32_at(20), capacity)?;
    let params = StoreParams::new(geometry, integrity);
    if u32_at(32) as usize != params.record_size() {
        return Err(Error::Format("record size does not match geometry".into()));
    }
    let digest_size = if integrity { DIGEST_SIZE as u32 } else { 0 };
    if u32_at(36) != digest_size {
        return Err(Error::Format(
            "digest size does not match integrity flag".into(),
        ));
    }
    Ok(params)
}

fn medium_for(file: File, params: &StoreParams) -> FileMedium {
    let record_size = params.record_size() as u64;
    FileMedium {
        file,
        record_size,
        digest_offset: HEADER_SIZE + params.geometry.bucket_count() * record_size,
        sync: false,
    }
}

fn file_len(params: &StoreParams) -> u64 {
    let count = params.geometry.bucket_count();
    let digests = if params.integrity {
        count * DIGEST_SIZE as u64
    } else {
        0
    };
    HEADER_SIZE + count * params.record_size() as u64 + digests
}

/// Creates (or truncates) a tree file with zeroed records.
pub fn create(path: impl AsRef<Path>, params: StoreParams) -> Result<FileStore> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)?;
    file.write_all(&encode_header(&params))?;
    file.set_len(file_len(&params))?;
    let medium = medium_for(file, &params);
    Ok(TreeStore::create(params, medium)?)
}

/// Opens an existing tree file, taking the parameters from its header.
pub fn open(path: impl AsRef<Path>) -> Result<FileStore> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut header = [0u8; HEADER_SIZE as usize];
    file.read_exact(&mut header)?;
    let params = decode_header(&header)?;
    if file.metadata()?.len() != file_len(&params) {
        return Err(Error::Format("tree file is truncated".into()));
    }
    let medium = medium_for(file, &params);
    Ok(TreeStore::open(params, medium))
}

/// Opens `path` if it holds a tree with `params`, otherwise creates it.
pub fn open_or_create(path: impl AsRef<Path>, params: StoreParams) -> Result<FileStore> {
    let path = path.as_ref();
    if path.exists() {
        let store = open(path)?;
        let theirs = pathoram_core::BucketStore::params(&store);
        if theirs != params {
            return Err(Error::Format(format!(
                "{} holds a tree with different parameters",
                path.display()
            )));
        }
        Ok(store)
    } else {
        create(path, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathoram_core::{BucketStore, Leaf, SealedBucket};

    fn params(integrity: bool) -> StoreParams {
        StoreParams::new(TreeGeometry::new(3, 2, 16, 8).unwrap(), integrity)
    }

    #[test]
    fn header_round_trip() {
        for integrity in [false, true] {
            let p = params(integrity);
            assert_eq!(decode_header(&encode_header(&p)).unwrap(), p);
        }
        let mut bad = encode_header(&params(false));
        bad[0] = b'X';
        assert!(decode_header(&bad).is_err());
        let mut bad = encode_header(&params(false));
        bad[8] = 2;
        assert!(decode_header(&bad).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.bin");
        let p = params(true);
        let records: Vec<_> = (0..4u8)
            .map(|i| SealedBucket::from_bytes(vec![i + 1; p.record_size()]))
            .collect();
        let before = {
            let mut store = create(&path, p).unwrap();
            store.write_path(Leaf(6), records.clone()).unwrap();
            store.read_path(Leaf(6)).unwrap()
        };
        let mut reopened = open(&path).unwrap();
        assert_eq!(reopened.params(), p);
        let after = reopened.read_path(Leaf(6)).unwrap();
        assert_eq!(after, before);
        assert_eq!(after.buckets, records);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            HEADER_SIZE + 15 * p.record_size() as u64 + 15 * 32
        );
    }

    #[test]
    fn parameter_mismatch_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.bin");
        create(&path, params(false)).unwrap();
        assert!(open_or_create(&path, params(true)).is_err());
        assert!(open_or_create(&path, params(false)).is_ok());
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.bin");
        create(&path, params(false)).unwrap();
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(100).unwrap();
        assert!(open(&path).is_err());
    }
}
