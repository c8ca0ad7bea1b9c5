use std::fmt;

use pathoram_core::store::PathOp;
use pathoram_core::{MemoryStore, OramClient, RecordingStore, StoreParams, TreeGeometry};

use crate::error::{Error, Result};
use crate::harness::stats::{self, ChiSquare};
use crate::harness::{SeededRun, Workload, WorkloadKind};

/// Family-wise significance of the whole battery.
pub const SIGNIFICANCE: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObliviousConfig {
    pub height: u32,
    pub bucket_size: u32,
    pub block_size: u32,
    /// N; `None` means 2^L.
    pub capacity: Option<u64>,
    /// Accesses (revealed leaves) per workload.
    pub samples: u64,
    pub seed: u64,
}

impl Default for ObliviousConfig {
    fn default() -> Self {
        ObliviousConfig {
            height: 10,
            bucket_size: 4,
            block_size: 16,
            capacity: None,
            samples: 102_400,
            seed: 0,
        }
    }
}

impl ObliviousConfig {
    fn geometry(&self) -> Result<TreeGeometry> {
        let capacity = self.capacity.unwrap_or(1u64 << self.height);
        Ok(TreeGeometry::new(
            self.height,
            self.bucket_size,
            self.block_size,
            capacity,
        )?)
    }

    pub fn min_samples(&self) -> u64 {
        100u64 << self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestLine {
    pub name: String,
    pub result: ChiSquare,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObliviousReport {
    /// Per-test threshold after the Bonferroni correction.
    pub alpha: f64,
    pub samples: u64,
    pub lines: Vec<TestLine>,
}

impl ObliviousReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn line(&self, name: &str) -> Option<&TestLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for ObliviousReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "samples per workload: {}, per-test alpha: {:.3e} (family {SIGNIFICANCE})",
            self.samples, self.alpha
        )?;
        for l in &self.lines {
            writeln!(
                f,
                "{:<42} chi2={:>12.2} dof={:>5} p={:.4e} {}",
                l.name,
                l.result.statistic,
                l.result.dof,
                l.result.p_value,
                if l.pass { "PASS" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Leaves the backend saw in path reads, one per access.
pub fn revealed_leaves(
    config: &ObliviousConfig,
    kind: WorkloadKind,
    seed: u64,
    remap_disabled: bool,
) -> Result<Vec<u64>> {
    let geometry = config.geometry()?;
    let store = RecordingStore::new(MemoryStore::new(StoreParams::new(geometry, false)));
    let run = SeededRun::new(seed);
    let mut client = OramClient::format(geometry, &run.key, store, false, run.client_rng)?;
    set_remap(&mut client, remap_disabled)?;
    client.store_mut().take_log();
    let workload = Workload::new(
        kind,
        geometry.capacity(),
        config.block_size as usize,
        run.workload_rng,
    );
    for request in workload.take(config.samples as usize) {
        client.access(request)?;
    }
    Ok(client
        .store_mut()
        .take_log()
        .into_iter()
        .filter(|(op, _)| *op == PathOp::Read)
        .map(|(_, leaf)| leaf.0)
        .collect())
}

#[cfg(any(debug_assertions, feature = "test-hooks"))]
fn set_remap<
    S: pathoram_core::BucketStore,
    R: rand_chacha::rand_core::RngCore + rand_chacha::rand_core::CryptoRng,
>(
    client: &mut OramClient<S, R>,
    disabled: bool,
) -> Result<()> {
    client.set_remap_disabled(disabled);
    Ok(())
}

#[cfg(not(any(debug_assertions, feature = "test-hooks")))]
fn set_remap<S, R>(_client: &mut OramClient<S, R>, disabled: bool) -> Result<()> {
    if disabled {
        return Err(Error::Usage(
            "the remap-disabled control needs a debug build or the test-hooks feature".into(),
        ));
    }
    Ok(())
}

fn battery(config: &ObliviousConfig, remap_disabled: bool) -> Result<ObliviousReport> {
    if config.samples < config.min_samples() {
        return Err(Error::Usage(format!(
            "{} samples are too few for L={}: use at least 100 * 2^L = {}, or lower L",
            config.samples,
            config.height,
            config.min_samples()
        )));
    }
    let cells = 1usize << config.height;
    let mut histograms = Vec::new();
    for (i, kind) in WorkloadKind::ALL.into_iter().enumerate() {
        // Each workload gets its own seed.
        let seed = config.seed.wrapping_add(i as u64);
        let leaves = revealed_leaves(config, kind, seed, remap_disabled)?;
        histograms.push((kind, stats::histogram(leaves, cells)));
    }
    let tests = histograms.len() + histograms.len() * (histograms.len() - 1) / 2;
    let alpha = SIGNIFICANCE / tests as f64;
    let mut lines = Vec::new();
    let mut push = |name: String, result: ChiSquare| {
        lines.push(TestLine {
            name,
            result,
            pass: result.p_value >= alpha,
        })
    };
    for (kind, counts) in &histograms {
        push(format!("uniformity {kind}"), stats::uniformity(counts));
    }
    for (i, (a, ca)) in histograms.iter().enumerate() {
        for (b, cb) in &histograms[i + 1..] {
            push(format!("two-sample {a} vs {b}"), stats::two_sample(ca, cb));
        }
    }
    Ok(ObliviousReport {
        alpha,
        samples: config.samples,
        lines,
    })
}

/// Uniformity of revealed leaves for each workload kind and pairwise
/// homogeneity across kinds, Bonferroni-corrected over all tests.
pub fn run_obliviousness_test(config: &ObliviousConfig) -> Result<ObliviousReport> {
    battery(config, false)
}

/// The same battery against a client that never remaps. It should fail.
pub fn run_negative_control(config: &ObliviousConfig) -> Result<ObliviousReport> {
    battery(config, true)
}
