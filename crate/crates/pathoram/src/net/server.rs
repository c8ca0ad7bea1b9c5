use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::thread;

use pathoram_core::store::Snapshot;
use pathoram_core::{BucketStore, StoreError, StoreParams};

use super::wire::{self, Frame, Hello, Opcode, PathBody};
use crate::backend::AnyStore;
use crate::error::Result;
use crate::file_store;

/// Environment variable that turns on SNAPSHOT_DEBUG in builds that carry
/// the debug hook.
pub const DEBUG_HOOK_ENV: &str = "PATHORAM_DEBUG_HOOK";

/// Where a daemon keeps the tree of each connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ServerBackend {
    /// A fresh in-memory tree per connection.
    Memory,
    /// A tree file, reopened for every connection.
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub params: StoreParams,
    pub backend: ServerBackend,
    pub debug_hook: bool,
}

impl ServerConfig {
    pub fn new(params: StoreParams, backend: ServerBackend) -> Self {
        ServerConfig {
            params,
            backend,
            debug_hook: debug_hook_from_env(),
        }
    }

    fn open_store(&self) -> Result<AnyStore> {
        Ok(match &self.backend {
            ServerBackend::Memory => AnyStore::memory(self.params),
            ServerBackend::File(path) => {
                AnyStore::File(file_store::open_or_create(path, self.params)?)
            }
        })
    }
}

/// True when the hook is compiled in and `PATHORAM_DEBUG_HOOK=1`.
pub fn debug_hook_from_env() -> bool {
    cfg!(any(debug_assertions, feature = "test-hooks"))
        && std::env::var(DEBUG_HOOK_ENV).is_ok_and(|v| v == "1")
}

pub struct Server {
    listener: TcpListener,
    config: ServerConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            config,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves one connection at a time; each connection gets its own store.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let peer = stream.peer_addr().ok();
            match self.config.open_store() {
                Ok(store) => {
                    if let Err(err) = serve_connection(stream, store, &self.config) {
                        log_error(peer, &err);
                    }
                }
                Err(err) => eprintln!("cannot open store for {peer:?}: {err}"),
            }
        }
        Ok(())
    }

    /// Serves exactly `connections` connections, then returns.
    pub fn run_for(self, connections: usize) -> Result<()> {
        for stream in self.listener.incoming().take(connections) {
            let store = self.config.open_store()?;
            let stream = stream?;
            let peer = stream.peer_addr().ok();
            if let Err(err) = serve_connection(stream, store, &self.config) {
                log_error(peer, &err);
            }
        }
        Ok(())
    }

    pub fn spawn(self) -> thread::JoinHandle<Result<()>> {
        thread::spawn(move || self.run())
    }
}

fn log_error(peer: Option<SocketAddr>, err: &StoreError) {
    if !matches!(err, StoreError::Transport(_)) {
        eprintln!("connection {peer:?}: {err}");
    }
}

/// Serves one client until it disconnects. Requests are strictly serialized.
pub fn serve_connection(
    stream: TcpStream,
    mut store: AnyStore,
    config: &ServerConfig,
) -> Result<(), StoreError> {
    let transport = |e: std::io::Error| StoreError::Transport(e.to_string());
    stream.set_nodelay(true).map_err(transport)?;
    let mut reader = BufReader::new(stream.try_clone().map_err(transport)?);
    let mut writer = BufWriter::new(stream);
    let params = store.params();
    let mut send = |frame: Frame| wire::write_frame(&mut writer, &frame).map_err(transport);

    let hello = match wire::read_frame(&mut reader, wire::MAX_HELLO_LEN)? {
        None => return Ok(()),
        Some(frame) if frame.opcode == Opcode::Hello => frame,
        Some(frame) => {
            let err = StoreError::Handshake(format!("expected HELLO, got {:?}", frame.opcode));
            send(Frame::new(Opcode::Error, wire::encode_error(&err)))?;
            return Err(err);
        }
    };
    let checked = Hello::decode(&hello.payload).and_then(|theirs| {
        match wire::param_mismatch(&params, &theirs.params) {
            Some(msg) => Err(StoreError::Handshake(msg)),
            None => Ok(()),
        }
    });
    if let Err(err) = checked {
        send(Frame::new(Opcode::Error, wire::encode_error(&err)))?;
        return Err(err);
    }
    send(Frame::new(Opcode::Hello, Hello::new(params).encode()))?;

    let max_request = wire::max_request_len(&params);
    loop {
        let frame = match wire::read_frame(&mut reader, max_request) {
            Ok(Some(frame)) => frame,
            Ok(None) => return Ok(()),
            Err(err) => {
                // The stream position is unknown after a bad frame.
                let _ = send(Frame::new(Opcode::Error, wire::encode_error(&err)));
                return Err(err);
            }
        };
        let reply = match frame.opcode {
            Opcode::ReadPath => wire::decode_leaf(&frame.payload)
                .and_then(|leaf| store.read_path(leaf))
                .map(|read| {
                    PathBody {
                        buckets: read.buckets,
                        digests: read.siblings,
                    }
                    .encode()
                }),
            Opcode::WritePath => wire::decode_write(&frame.payload, params.record_size())
                .and_then(|(leaf, buckets)| store.write_path(leaf, buckets))
                .map(|()| Vec::new()),
            Opcode::SnapshotDebug => snapshot(&mut store, config.debug_hook).map(|snap| {
                PathBody {
                    buckets: snap.records,
                    digests: snap.digests,
                }
                .encode()
            }),
            other => {
                let err = StoreError::Protocol(format!("unexpected {other:?} request"));
                send(Frame::new(Opcode::Error, wire::encode_error(&err)))?;
                return Err(err);
            }
        };
        match reply {
            Ok(payload) => send(Frame::new(Opcode::Ok, payload))?,
            Err(err) => send(Frame::new(Opcode::Error, wire::encode_error(&err)))?,
        }
    }
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
fn snapshot(store: &mut AnyStore, enabled: bool) -> Result<Snapshot, StoreError> {
    if enabled {
        pathoram_core::DebugHook::debug_snapshot(store)
    } else {
        Err(StoreError::DebugDisabled)
    }
}

#[cfg(not(any(debug_assertions, feature = "test-hooks")))]
fn snapshot(_store: &mut AnyStore, _enabled: bool) -> Result<Snapshot, StoreError> {
    Err(StoreError::DebugDisabled)
}

/// Starts a single-connection memory-backed daemon on an ephemeral loopback
/// port and returns its address.
pub fn spawn_loopback(
    params: StoreParams,
    debug_hook: bool,
) -> Result<(SocketAddr, thread::JoinHandle<Result<()>>)> {
    let config = ServerConfig {
        params,
        backend: ServerBackend::Memory,
        debug_hook,
    };
    let server = Server::bind("127.0.0.1:0", config)?;
    let addr = server.local_addr()?;
    Ok((addr, thread::spawn(move || server.run_for(1))))
}
