use std::fmt;
use std::str::FromStr;

use pathoram_core::{AccessRequest, SecretKey};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::Error;

/// Logical access patterns the harness drives the client with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WorkloadKind {
    /// Uniformly random block ids.
    Uniform,
    /// Block 0 over and over.
    RepeatedSingle,
    /// Ids 0, 1, ..., N-1, 0, 1, ...
    Sequential,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 3] = [
        WorkloadKind::Uniform,
        WorkloadKind::RepeatedSingle,
        WorkloadKind::Sequential,
    ];
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "uniform" => Ok(WorkloadKind::Uniform),
            "repeated-single" | "repeated" => Ok(WorkloadKind::RepeatedSingle),
            "sequential" => Ok(WorkloadKind::Sequential),
            _ => Err(Error::Usage(format!(
                "unknown workload {s:?} (expected uniform, repeated-single or sequential)"
            ))),
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadKind::Uniform => "uniform",
            WorkloadKind::RepeatedSingle => "repeated-single",
            WorkloadKind::Sequential => "sequential",
        })
    }
}

/// Deterministic randomness for one run. The workload, the client and the
/// key each get their own ChaCha stream of the same seed.
pub struct SeededRun {
    pub workload_rng: ChaCha20Rng,
    pub client_rng: ChaCha20Rng,
    pub key: SecretKey,
}

impl SeededRun {
    pub fn new(seed: u64) -> Self {
        let stream = |n: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        SeededRun {
            workload_rng: stream(0),
            client_rng: stream(1),
            key: SecretKey::generate(&mut stream(2)),
        }
    }
}

/// Infinite stream of requests: half reads, half writes of random data.
pub struct Workload {
    kind: WorkloadKind,
    capacity: u64,
    block_size: usize,
    rng: ChaCha20Rng,
    next: u64,
}

impl Workload {
    pub fn new(kind: WorkloadKind, capacity: u64, block_size: usize, rng: ChaCha20Rng) -> Self {
        Workload {
            kind,
            capacity,
            block_size,
            rng,
            next: 0,
        }
    }
}

impl Iterator for Workload {
    type Item = AccessRequest;

    fn next(&mut self) -> Option<AccessRequest> {
        let id = match self.kind {
            WorkloadKind::Uniform => uniform_below(&mut self.rng, self.capacity),
            WorkloadKind::RepeatedSingle => 0,
            WorkloadKind::Sequential => {
                let id = self.next;
                self.next = (self.next + 1) % self.capacity;
                id
            }
        };
        Some(if self.rng.next_u32() & 1 == 0 {
            AccessRequest::read(id)
        } else {
            let mut data = vec![0u8; self.block_size];
            self.rng.fill_bytes(&mut data);
            AccessRequest::write(id, data)
        })
    }
}

fn uniform_below(rng: &mut ChaCha20Rng, n: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % n;
        }
    }
}
