use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use pathoram_core::store::{PathRead, Snapshot};
use pathoram_core::{BucketStore, Leaf, SealedBucket, StoreError, StoreParams};

use super::wire::{self, Frame, Hello, Opcode, PathBody};

/// Client side of the wire protocol: a [`BucketStore`] whose buckets live on
/// a remote daemon.
///
/// Any transport or framing failure poisons the connection; open a new one
/// and hand it to `OramClient::reconnect`.
#[derive(Debug)]
pub struct RemoteStore {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    params: StoreParams,
    broken: bool,
    bytes_sent: u64,
    bytes_received: u64,
}

impl RemoteStore {
    /// Connects and runs the HELLO exchange. The server's parameters must
    /// match `params` exactly.
    pub fn connect(addr: impl ToSocketAddrs, params: StoreParams) -> Result<Self, StoreError> {
        let stream = TcpStream::connect(addr).map_err(|e| StoreError::Transport(e.to_string()))?;
        Self::handshake(stream, params)
    }

    pub fn handshake(stream: TcpStream, params: StoreParams) -> Result<Self, StoreError> {
        let transport = |e: std::io::Error| StoreError::Transport(e.to_string());
        stream.set_nodelay(true).map_err(transport)?;
        let mut store = RemoteStore {
            reader: BufReader::new(stream.try_clone().map_err(transport)?),
            writer: BufWriter::new(stream),
            params,
            broken: false,
            bytes_sent: 0,
            bytes_received: 0,
        };
        let reply = store.exchange(
            Frame::new(Opcode::Hello, Hello::new(params).encode()),
            wire::MAX_HELLO_LEN,
        )?;
        if reply.opcode != Opcode::Hello {
            store.broken = true;
            return Err(StoreError::Handshake(format!(
                "expected HELLO, got {:?}",
                reply.opcode
            )));
        }
        let theirs = Hello::decode(&reply.payload)?;
        if let Some(msg) = wire::param_mismatch(&params, &theirs.params) {
            store.broken = true;
            return Err(StoreError::Handshake(msg));
        }
        Ok(store)
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    /// Sends one frame and reads one frame back. ERROR replies become errors.
    fn exchange(&mut self, request: Frame, max_reply: usize) -> Result<Frame, StoreError> {
        if self.broken {
            return Err(StoreError::Transport("connection is closed".into()));
        }
        let result = self.exchange_inner(&request, max_reply);
        match &result {
            Err(StoreError::Transport(_))
            | Err(StoreError::Framing { .. })
            | Err(StoreError::Protocol(_)) => self.broken = true,
            _ => {}
        }
        result
    }

    fn exchange_inner(&mut self, request: &Frame, max_reply: usize) -> Result<Frame, StoreError> {
        wire::write_frame(&mut self.writer, request)
            .map_err(|e| StoreError::Transport(e.to_string()))?;
        self.bytes_sent += request.encoded_len() as u64;
        let reply = wire::read_frame(&mut self.reader, max_reply)?
            .ok_or_else(|| StoreError::Transport("server closed the connection".into()))?;
        self.bytes_received += reply.encoded_len() as u64;
        match reply.opcode {
            Opcode::Error => Err(wire::decode_error(&reply.payload)),
            _ => Ok(reply),
        }
    }

    fn expect_ok(&mut self, reply: Frame) -> Result<Vec<u8>, StoreError> {
        if reply.opcode == Opcode::Ok {
            Ok(reply.payload)
        } else {
            self.broken = true;
            Err(StoreError::Protocol(format!(
                "expected OK, got {:?}",
                reply.opcode
            )))
        }
    }

    /// Full server state; the daemon must run with the debug hook enabled.
    pub fn snapshot(&mut self) -> Result<Snapshot, StoreError> {
        let reply = self.exchange(
            Frame::new(Opcode::SnapshotDebug, Vec::new()),
            wire::max_snapshot_len(&self.params),
        )?;
        let payload = self.expect_ok(reply)?;
        let body = PathBody::decode(&payload, self.params.record_size())?;
        if body.buckets.len() as u64 != self.params.geometry.bucket_count() {
            return Err(StoreError::Protocol(
                "snapshot has the wrong bucket count".into(),
            ));
        }
        Ok(Snapshot {
            records: body.buckets,
            digests: body.digests,
        })
    }
}

impl BucketStore for RemoteStore {
    fn params(&self) -> StoreParams {
        self.params
    }

    fn read_path(&mut self, leaf: Leaf) -> Result<PathRead, StoreError> {
        let reply = self.exchange(
            Frame::new(Opcode::ReadPath, wire::encode_leaf(leaf)),
            wire::max_response_len(&self.params),
        )?;
        let payload = self.expect_ok(reply)?;
        let body = PathBody::decode(&payload, self.params.record_size())?;
        let geometry = &self.params.geometry;
        if body.buckets.len() != geometry.path_len() {
            return Err(StoreError::Protocol(format!(
                "path read returned {} records, expected {}",
                body.buckets.len(),
                geometry.path_len()
            )));
        }
        match (&body.digests, self.params.integrity) {
            (None, true) => {
                return Err(StoreError::Protocol("sibling digests missing".into()));
            }
            (Some(d), true) if d.len() != geometry.height() as usize => {
                return Err(StoreError::Protocol(
                    "wrong number of sibling digests".into(),
                ));
            }
            _ => {}
        }
        Ok(PathRead {
            buckets: body.buckets,
            siblings: if self.params.integrity {
                body.digests
            } else {
                None
            },
        })
    }

    fn write_path(&mut self, leaf: Leaf, buckets: Vec<SealedBucket>) -> Result<(), StoreError> {
        let reply = self.exchange(
            Frame::new(Opcode::WritePath, wire::encode_write(leaf, &buckets)),
            wire::MAX_HELLO_LEN,
        )?;
        self.expect_ok(reply).map(drop)
    }
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
impl pathoram_core::DebugHook for RemoteStore {
    fn debug_snapshot(&mut self) -> Result<Snapshot, StoreError> {
        self.snapshot()
    }

    /// Fault injection is only available on local stores.
    fn debug_overwrite(
        &mut self,
        _index: u64,
        _record: &[u8],
        _policy: pathoram_core::DigestPolicy,
    ) -> Result<(), StoreError> {
        Err(StoreError::DebugDisabled)
    }
}
