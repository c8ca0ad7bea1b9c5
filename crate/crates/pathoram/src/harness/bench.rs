use std::fmt;
use std::time::Instant;

use pathoram_core::{BucketStore, OramClient, StoreParams, TreeGeometry};

use crate::backend::{AnyStore, BackendKind};
use crate::error::{Error, Result};
use crate::harness::{SeededRun, Workload, WorkloadKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchConfig {
    pub height: u32,
    pub bucket_size: u32,
    pub block_size: u32,
    pub capacity: Option<u64>,
    pub accesses: u64,
    pub seed: u64,
    pub workload: WorkloadKind,
    pub backend: BackendKind,
    pub integrity: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            height: 10,
            bucket_size: 4,
            block_size: 64,
            capacity: None,
            accesses: 10_000,
            seed: 0,
            workload: WorkloadKind::Uniform,
            backend: BackendKind::Memory,
            integrity: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub accesses: u64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    /// Bytes moved between client and backend per access: framed bytes for
    /// remote backends, record bytes otherwise.
    pub bytes_per_access: f64,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accesses={} mean_us={:.1} p50_us={:.1} p99_us={:.1} bytes_per_access={:.0}",
            self.accesses, self.mean_us, self.p50_us, self.p99_us, self.bytes_per_access
        )
    }
}

fn traffic(store: &AnyStore) -> u64 {
    match store {
        AnyStore::Remote(s) => s.bytes_sent() + s.bytes_received(),
        local => {
            let stats = local.stats().expect("local stores count buckets");
            (stats.bucket_reads + stats.bucket_writes) * local.params().record_size() as u64
        }
    }
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.accesses == 0 {
        return Err(Error::Usage("access count must be at least 1".into()));
    }
    let capacity = config.capacity.unwrap_or(1u64 << config.height);
    let geometry = TreeGeometry::new(
        config.height,
        config.bucket_size,
        config.block_size,
        capacity,
    )?;
    let params = StoreParams::new(geometry, config.integrity);
    let store = AnyStore::open(&config.backend, params, "bench")?;
    let run = SeededRun::new(config.seed);
    let mut client =
        OramClient::format(geometry, &run.key, store, config.integrity, run.client_rng)?;
    let workload = Workload::new(
        config.workload,
        capacity,
        config.block_size as usize,
        run.workload_rng,
    );

    let before = traffic(client.store());
    let mut latencies = Vec::with_capacity(config.accesses as usize);
    for request in workload.take(config.accesses as usize) {
        let start = Instant::now();
        client.access(request)?;
        latencies.push(start.elapsed().as_secs_f64() * 1e6);
    }
    let bytes = traffic(client.store()) - before;

    let n = latencies.len() as f64;
    let mean_us = latencies.iter().sum::<f64>() / n;
    latencies.sort_by(f64::total_cmp);
    let rank = |q: f64| latencies[((q * n).ceil() as usize).max(1) - 1];
    Ok(BenchReport {
        accesses: config.accesses,
        mean_us,
        p50_us: rank(0.5),
        p99_us: rank(0.99),
        bytes_per_access: bytes as f64 / n,
    })
}
