use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use pathoram_core::{ClientState, OramClient, StoreParams, TreeGeometry};

use crate::backend::AnyStore;
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, SeededRun, Workload};

pub const CSV_HEADER: &str = "Z,L,access_index,stash_size";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StashSummary {
    pub max: u64,
    pub mean: f64,
    /// 99.9th percentile, nearest-rank.
    pub p999: u64,
}

impl StashSummary {
    /// `None` for an empty trace.
    pub fn of(sizes: &[u64]) -> Option<Self> {
        if sizes.is_empty() {
            return None;
        }
        let mut sorted = sizes.to_vec();
        sorted.sort_unstable();
        let rank = (sorted.len() as f64 * 0.999).ceil() as usize;
        Some(StashSummary {
            max: *sorted.last().unwrap(),
            mean: sizes.iter().sum::<u64>() as f64 / sizes.len() as f64,
            p999: sorted[rank.max(1) - 1],
        })
    }
}

/// Post-access stash sizes of one (Z, L) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct StashTrace {
    pub bucket_size: u32,
    pub height: u32,
    pub capacity: u64,
    pub sizes: Vec<u64>,
}

impl StashTrace {
    pub fn summary(&self) -> Option<StashSummary> {
        StashSummary::of(&self.sizes)
    }
}

/// Outcome of one cell. On a runtime failure the trace holds the accesses
/// completed before it.
#[derive(Debug)]
pub struct CellResult {
    pub trace: StashTrace,
    /// Client state after the last access; absent after a failure.
    pub state: Option<ClientState>,
    pub error: Option<String>,
}

pub fn cell_name(z: u32, l: u32) -> String {
    format!("Z{z}_L{l}")
}

pub fn csv_path(dir: &Path, z: u32, l: u32) -> PathBuf {
    dir.join(format!("stash_{}.csv", cell_name(z, l)))
}

pub fn summary_path(dir: &Path, z: u32, l: u32) -> PathBuf {
    dir.join(format!("summary_{}.txt", cell_name(z, l)))
}

/// Runs one cell on a fresh client and backend.
pub fn run_cell(config: &ExperimentConfig, z: u32, l: u32) -> Result<CellResult> {
    let capacity = config.capacity_for(l);
    let geometry = TreeGeometry::new(l, z, config.block_size, capacity)?;
    let params = StoreParams::new(geometry, config.integrity);
    let store = AnyStore::open(&config.backend, params, &cell_name(z, l))?;
    let run = SeededRun::new(config.seed);
    let mut trace = StashTrace {
        bucket_size: z,
        height: l,
        capacity,
        sizes: Vec::with_capacity(config.accesses as usize),
    };
    let mut client =
        match OramClient::format(geometry, &run.key, store, config.integrity, run.client_rng) {
            Ok(client) => client,
            Err(err) => {
                return Ok(CellResult {
                    trace,
                    state: None,
                    error: Some(format!("format failed: {err}")),
                })
            }
        };
    let workload = Workload::new(
        config.workload,
        capacity,
        config.block_size as usize,
        run.workload_rng,
    );
    for (i, request) in workload.take(config.accesses as usize).enumerate() {
        if let Err(err) = client.access(request) {
            return Ok(CellResult {
                trace,
                state: None,
                error: Some(format!("access {i} failed: {err}")),
            });
        }
        trace.sizes.push(client.stash_len() as u64);
    }
    Ok(CellResult {
        trace,
        state: Some(client.export_state()?),
        error: None,
    })
}

/// Writes the CSV and summary files of one cell.
pub fn write_cell(dir: &Path, config: &ExperimentConfig, cell: &CellResult) -> Result<()> {
    let t = &cell.trace;
    let mut csv = BufWriter::new(fs::File::create(csv_path(dir, t.bucket_size, t.height))?);
    writeln!(csv, "{CSV_HEADER}")?;
    for (i, size) in t.sizes.iter().enumerate() {
        writeln!(csv, "{},{},{},{}", t.bucket_size, t.height, i, size)?;
    }
    if let Some(err) = &cell.error {
        writeln!(csv, "# ERROR {err}")?;
    }
    csv.flush()?;

    let mut out = String::new();
    let c = config;
    out += &format!(
        "Z={}\nL={}\nN={}\nB={}\n",
        t.bucket_size, t.height, t.capacity, c.block_size
    );
    out += &format!(
        "workload={}\naccesses={}\nseed={}\n",
        c.workload, c.accesses, c.seed
    );
    out += &format!("backend={}\nintegrity={}\n", c.backend, c.integrity);
    out += &format!("completed={}\n", t.sizes.len());
    if let Some(s) = t.summary() {
        out += &format!("max={}\nmean={:.6}\np999={}\n", s.max, s.mean, s.p999);
    }
    if let Some(err) = &cell.error {
        out += &format!("# ERROR {err}\n");
    }
    fs::write(summary_path(dir, t.bucket_size, t.height), out)?;
    Ok(())
}

/// Runs every (Z, L) cell, writing `stash_Z*_L*.csv` and `summary_Z*_L*.txt`
/// into the output directory. Cells run in parallel, one client and backend
/// each. Results come back in (L, Z) order of the config lists.
///
/// Files of failed cells are still written, ending in a `# ERROR` line; the
/// first failure is then returned as an error.
pub fn run_stash_experiment(config: &ExperimentConfig) -> Result<Vec<CellResult>> {
    config.validate()?;
    fs::create_dir_all(&config.output)?;
    let cells: Vec<(u32, u32)> = config
        .heights
        .iter()
        .flat_map(|&l| config.bucket_sizes.iter().map(move |&z| (z, l)))
        .collect();
    let results: Vec<Mutex<Option<Result<CellResult>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cells.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(z, l)) = cells.get(i) else { break };
                let result = run_cell(config, z, l);
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut out = Vec::with_capacity(cells.len());
    let mut first_error = None;
    for slot in results {
        let cell = slot.into_inner().unwrap().expect("every cell ran")?;
        write_cell(&config.output, config, &cell)?;
        if let (None, Some(err)) = (&first_error, &cell.error) {
            first_error = Some(format!(
                "cell {}: {err}",
                cell_name(cell.trace.bucket_size, cell.trace.height)
            ));
        }
        out.push(cell);
    }
    match first_error {
        Some(err) => Err(Error::Format(err)),
        None => Ok(out),
    }
}
