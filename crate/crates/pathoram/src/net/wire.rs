//! Length-prefixed binary framing.
//!
//! Every frame is `length: u32 BE | opcode: u8 | payload`, where `length`
//! counts the opcode and payload. Integers inside payloads are big-endian.
//!
//! | opcode | name           | payload                                                        |
//! |--------|----------------|----------------------------------------------------------------|
//! | 0x01   | HELLO          | version u8, L u32, Z u32, B u32, N u64, record size u32, integrity u8 |
//! | 0x02   | READ_PATH      | leaf u64                                                       |
//! | 0x03   | WRITE_PATH     | leaf u64, count u32, count records (root first)                |
//! | 0x04   | SNAPSHOT_DEBUG | empty                                                          |
//! | 0x10   | OK             | empty, or a path/snapshot body (see [`PathBody`])              |
//! | 0x11   | ERROR          | code u8, UTF-8 message                                         |
//!
//! A path or snapshot body is `count u32, count records, has_digests u8,
//! digest count u32, digests` (the last two only when `has_digests = 1`).

use std::io::{self, Read, Write};

use pathoram_core::crypto::{Digest, DIGEST_SIZE};
use pathoram_core::{Leaf, SealedBucket, StoreError, StoreParams, TreeGeometry};

pub const PROTOCOL_VERSION: u8 = 1;
pub const HELLO_LEN: usize = 26;
/// Allowance on top of the exact maximum payload.
const SLACK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Opcode {
    Hello = 0x01,
    ReadPath = 0x02,
    WritePath = 0x03,
    SnapshotDebug = 0x04,
    Ok = 0x10,
    Error = 0x11,
}

impl Opcode {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => Opcode::Hello,
            0x02 => Opcode::ReadPath,
            0x03 => Opcode::WritePath,
            0x04 => Opcode::SnapshotDebug,
            0x10 => Opcode::Ok,
            0x11 => Opcode::Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, payload: Vec<u8>) -> Self {
        Frame { opcode, payload }
    }

    pub fn encoded_len(&self) -> usize {
        5 + self.payload.len()
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    let len = u32::try_from(frame.payload.len() + 1)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[frame.opcode as u8])?;
    w.write_all(&frame.payload)?;
    w.flush()
}

/// Reads one frame. `Ok(None)` is a clean end of stream before any header
/// byte; a stream that ends inside a frame is a framing error.
pub fn read_frame<R: Read>(r: &mut R, max_len: usize) -> Result<Option<Frame>, StoreError> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(StoreError::Framing {
                    expected: header.len(),
                    actual: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(StoreError::Transport(e.to_string())),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len == 0 || len > max_len {
        return Err(StoreError::Framing {
            expected: max_len,
            actual: len,
        });
    }
    let mut body = vec![0u8; len];
    let mut got = 0;
    while got < len {
        match r.read(&mut body[got..]) {
            Ok(0) => {
                return Err(StoreError::Framing {
                    expected: len,
                    actual: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(StoreError::Transport(e.to_string())),
        }
    }
    let opcode = Opcode::from_byte(body[0])
        .ok_or_else(|| StoreError::Protocol(format!("unknown opcode {:#04x}", body[0])))?;
    body.remove(0);
    Ok(Some(Frame::new(opcode, body)))
}

/// Largest frame a client may send once parameters are agreed.
pub fn max_request_len(params: &StoreParams) -> usize {
    1 + 8 + 4 + params.geometry.path_len() * params.record_size() + SLACK
}

/// Largest path response a server may send.
pub fn max_response_len(params: &StoreParams) -> usize {
    1 + 4
        + params.geometry.path_len() * params.record_size()
        + 1
        + 4
        + params.geometry.height() as usize * DIGEST_SIZE
        + SLACK
}

pub fn max_snapshot_len(params: &StoreParams) -> usize {
    let count = params.geometry.bucket_count() as usize;
    1 + 4 + count * params.record_size() + 1 + 4 + count * DIGEST_SIZE + SLACK
}

pub const MAX_HELLO_LEN: usize = 1 + HELLO_LEN + SLACK;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    pub params: StoreParams,
}

impl Hello {
    pub fn new(params: StoreParams) -> Self {
        Hello {
            version: PROTOCOL_VERSION,
            params,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = &self.params.geometry;
        let mut out = Vec::with_capacity(HELLO_LEN);
        out.push(self.version);
        out.extend_from_slice(&g.height().to_be_bytes());
        out.extend_from_slice(&g.bucket_size().to_be_bytes());
        out.extend_from_slice(&g.block_size().to_be_bytes());
        out.extend_from_slice(&g.capacity().to_be_bytes());
        out.extend_from_slice(&(self.params.record_size() as u32).to_be_bytes());
        out.push(self.params.integrity as u8);
        out
    }

    /// Decodes the version byte first so that a peer speaking another
    /// version gets a version error rather than a field error.
    pub fn decode(payload: &[u8]) -> Result<Self, StoreError> {
        let version = *payload
            .first()
            .ok_or_else(|| StoreError::Handshake("empty HELLO".into()))?;
        if version != PROTOCOL_VERSION {
            return Err(StoreError::Handshake(format!(
                "unsupported protocol version {version} (expected {PROTOCOL_VERSION})"
            )));
        }
        if payload.len() != HELLO_LEN {
            return Err(StoreError::Handshake(format!(
                "HELLO payload is {} bytes, expected {HELLO_LEN}",
                payload.len()
            )));
        }
        let u32_at = |at: usize| u32::from_be_bytes(payload[at..at + 4].try_into().unwrap());
        let capacity = u64::from_be_bytes(payload[13..21].try_into().unwrap());
        let geometry = TreeGeometry::new(u32_at(1), u32_at(5), u32_at(9), capacity)
            .map_err(|e| StoreError::Handshake(e.to_string()))?;
        let integrity = match payload[25] {
            0 => false,
            1 => true,
            other => return Err(StoreError::Handshake(format!("bad integrity flag {other}"))),
        };
        let params = StoreParams::new(geometry, integrity);
        let record_size = u32_at(21) as usize;
        if record_size != params.record_size() {
            return Err(StoreError::Handshake(format!(
                "record_size {record_size} does not match geometry ({})",
                params.record_size()
            )));
        }
        Ok(Hello { version, params })
    }
}

/// Names the first parameter on which `ours` and `theirs` disagree.
pub fn param_mismatch(ours: &StoreParams, theirs: &StoreParams) -> Option<String> {
    let (a, b) = (&ours.geometry, &theirs.geometry);
    let fields = [
        ("height", a.height() as u64, b.height() as u64),
        (
            "bucket_size",
            a.bucket_size() as u64,
            b.bucket_size() as u64,
        ),
        ("block_size", a.block_size() as u64, b.block_size() as u64),
        ("capacity", a.capacity(), b.capacity()),
        (
            "record_size",
            ours.record_size() as u64,
            theirs.record_size() as u64,
        ),
        ("integrity", ours.integrity as u64, theirs.integrity as u64),
    ];
    fields
        .into_iter()
        .find(|(_, x, y)| x != y)
        .map(|(field, x, y)| format!("parameter mismatch on {field}: local {x}, peer {y}"))
}

pub fn encode_leaf(leaf: Leaf) -> Vec<u8> {
    leaf.0.to_be_bytes().to_vec()
}

pub fn decode_leaf(payload: &[u8]) -> Result<Leaf, StoreError> {
    let bytes: [u8; 8] = payload.try_into().map_err(|_| StoreError::Framing {
        expected: 8,
        actual: payload.len(),
    })?;
    Ok(Leaf(u64::from_be_bytes(bytes)))
}

pub fn encode_write(leaf: Leaf, buckets: &[SealedBucket]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + buckets.iter().map(SealedBucket::len).sum::<usize>());
    out.extend_from_slice(&leaf.0.to_be_bytes());
    out.extend_from_slice(&(buckets.len() as u32).to_be_bytes());
    for b in buckets {
        out.extend_from_slice(b.as_bytes());
    }
    out
}

/// Splits a WRITE_PATH payload. The payload length must be exactly what the
/// count and the record size imply.
pub fn decode_write(
    payload: &[u8],
    record_size: usize,
) -> Result<(Leaf, Vec<SealedBucket>), StoreError> {
    if payload.len() < 12 {
        return Err(StoreError::Framing {
            expected: 12,
            actual: payload.len(),
        });
    }
    let leaf = decode_leaf(&payload[..8])?;
    let count = u32::from_be_bytes(payload[8..12].try_into().unwrap()) as usize;
    let body = &payload[12..];
    if body.len() != count * record_size {
        return Err(StoreError::Framing {
            expected: count * record_size,
            actual: body.len(),
        });
    }
    let buckets = body
        .chunks_exact(record_size.max(1))
        .map(|c| SealedBucket::from_bytes(c.to_vec()))
        .collect();
    Ok((leaf, buckets))
}

/// Records plus optional digests: the body of a path read or a snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathBody {
    pub buckets: Vec<SealedBucket>,
    pub digests: Option<Vec<Digest>>,
}

impl PathBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.buckets.len() as u32).to_be_bytes());
        for b in &self.buckets {
            out.extend_from_slice(b.as_bytes());
        }
        match &self.digests {
            Some(digests) => {
                out.push(1);
                out.extend_from_slice(&(digests.len() as u32).to_be_bytes());
                for d in digests {
                    out.extend_from_slice(d);
                }
            }
            None => out.push(0),
        }
        out
    }

    pub fn decode(payload: &[u8], record_size: usize) -> Result<Self, StoreError> {
        let short = || StoreError::Protocol("path body truncated".into());
        let count =
            u32::from_be_bytes(payload.get(..4).ok_or_else(short)?.try_into().unwrap()) as usize;
        let records_end = count
            .checked_mul(record_size)
            .and_then(|n| n.checked_add(4))
            .ok_or_else(short)?;
        let records = payload.get(4..records_end).ok_or_else(short)?;
        let buckets = records
            .chunks_exact(record_size.max(1))
            .map(|c| SealedBucket::from_bytes(c.to_vec()))
            .collect();
        let rest = &payload[records_end..];
        let digests = match rest.first() {
            Some(0) if rest.len() == 1 => None,
            Some(1) => {
                let n = u32::from_be_bytes(rest.get(1..5).ok_or_else(short)?.try_into().unwrap())
                    as usize;
                let body = &rest[5..];
                if body.len() != n * DIGEST_SIZE {
                    return Err(StoreError::Protocol(
                        "digest list has the wrong length".into(),
                    ));
                }
                Some(
                    body.chunks_exact(DIGEST_SIZE)
                        .map(|c| c.try_into().unwrap())
                        .collect(),
                )
            }
            _ => return Err(StoreError::Protocol("malformed digest section".into())),
        };
        Ok(PathBody { buckets, digests })
    }
}

const ERR_FRAMING: u8 = 1;
const ERR_ADDRESSING: u8 = 2;
const ERR_HANDSHAKE: u8 = 3;
const ERR_IO: u8 = 4;
const ERR_PROTOCOL: u8 = 5;
const ERR_DEBUG_DISABLED: u8 = 6;

pub fn encode_error(err: &StoreError) -> Vec<u8> {
    let code = match err {
        StoreError::Framing { .. } => ERR_FRAMING,
        StoreError::Addressing { .. } => ERR_ADDRESSING,
        StoreError::Handshake(_) => ERR_HANDSHAKE,
        StoreError::Io(_) | StoreError::Transport(_) => ERR_IO,
        StoreError::Protocol(_) => ERR_PROTOCOL,
        StoreError::DebugDisabled => ERR_DEBUG_DISABLED,
    };
    let mut out = vec![code];
    out.extend_from_slice(err.to_string().as_bytes());
    out
}

/// Maps an ERROR frame from the server back to a store error.
pub fn decode_error(payload: &[u8]) -> StoreError {
    let message = String::from_utf8_lossy(payload.get(1..).unwrap_or_default()).into_owned();
    match payload.first() {
        Some(&ERR_HANDSHAKE) => StoreError::Handshake(message),
        Some(&ERR_IO) => StoreError::Io(message),
        Some(&ERR_DEBUG_DISABLED) => StoreError::DebugDisabled,
        _ => StoreError::Protocol(format!("server error: {message}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StoreParams {
        StoreParams::new(TreeGeometry::new(10, 4, 64, 1024).unwrap(), true)
    }

    #[test]
    fn frame_round_trip() {
        let frame = Frame::new(Opcode::ReadPath, encode_leaf(Leaf(77)));
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        assert_eq!(&buf[..5], &[0, 0, 0, 9, 0x02]);
        let back = read_frame(&mut &buf[..], 64).unwrap().unwrap();
        assert_eq!(back, frame);
        assert_eq!(decode_leaf(&back.payload).unwrap(), Leaf(77));
        assert_eq!(read_frame(&mut &buf[..0], 64).unwrap(), None);
    }

    #[test]
    fn truncated_and_oversized_frames() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::new(Opcode::Ok, vec![1; 20])).unwrap();
        for cut in [2, 5, 10, buf.len() - 1] {
            assert!(matches!(
                read_frame(&mut &buf[..cut], 64),
                Err(StoreError::Framing { .. })
            ));
        }
        assert!(matches!(
            read_frame(&mut &buf[..], 8),
            Err(StoreError::Framing { .. })
        ));
        let bogus = [0, 0, 0, 1, 0x7f];
        assert!(matches!(
            read_frame(&mut &bogus[..], 8),
            Err(StoreError::Protocol(_))
        ));
    }

    #[test]
    fn hello_round_trip_and_mismatch() {
        let p = params();
        let hello = Hello::new(p);
        let bytes = hello.encode();
        assert_eq!(bytes.len(), HELLO_LEN);
        assert_eq!(bytes[0], PROTOCOL_VERSION);
        assert_eq!(Hello::decode(&bytes).unwrap(), hello);

        let mut other_version = bytes.clone();
        other_version[0] = 9;
        assert!(matches!(
            Hello::decode(&other_version),
            Err(StoreError::Handshake(m)) if m.contains("version")
        ));

        let q = StoreParams::new(TreeGeometry::new(10, 4, 32, 1024).unwrap(), true);
        let msg = param_mismatch(&p, &q).unwrap();
        assert!(msg.contains("block_size"), "{msg}");
        assert_eq!(param_mismatch(&p, &p), None);
    }

    #[test]
    fn path_body_round_trip() {
        let p = params();
        let body = PathBody {
            buckets: (0..11)
                .map(|i| SealedBucket::from_bytes(vec![i as u8; p.record_size()]))
                .collect(),
            digests: Some(vec![[3u8; 32]; 10]),
        };
        let bytes = body.encode();
        assert!(bytes.len() < max_response_len(&p));
        assert_eq!(PathBody::decode(&bytes, p.record_size()).unwrap(), body);
        let plain = PathBody {
            buckets: body.buckets.clone(),
            digests: None,
        };
        assert_eq!(
            PathBody::decode(&plain.encode(), p.record_size()).unwrap(),
            plain
        );
        assert!(PathBody::decode(&bytes[..bytes.len() - 3], p.record_size()).is_err());
    }

    #[test]
    fn write_payload_checks_sizes() {
        let p = params();
        let buckets: Vec<_> = (0..11)
            .map(|_| SealedBucket::from_bytes(vec![0; p.record_size()]))
            .collect();
        let payload = encode_write(Leaf(5), &buckets);
        assert!(payload.len() < max_request_len(&p));
        let (leaf, back) = decode_write(&payload, p.record_size()).unwrap();
        assert_eq!((leaf, back), (Leaf(5), buckets));
        let mut oversized = payload.clone();
        oversized.push(0);
        assert!(matches!(
            decode_write(&oversized, p.record_size()),
            Err(StoreError::Framing { .. })
        ));
    }

    #[test]
    fn error_codes() {
        let e = StoreError::Handshake("nope".into());
        assert!(matches!(
            decode_error(&encode_error(&e)),
            StoreError::Handshake(_)
        ));
        assert_eq!(
            decode_error(&encode_error(&StoreError::DebugDisabled)),
            StoreError::DebugDisabled
        );
        assert!(matches!(
            decode_error(&encode_error(&StoreError::Framing {
                expected: 1,
                actual: 2
            })),
            StoreError::Protocol(_)
        ));
    }
}
