use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pathoram::backend::BackendKind;
use pathoram::core::{StoreParams, TreeGeometry};
use pathoram::harness::{self, BenchConfig, ExperimentConfig, ObliviousConfig, WorkloadKind};
use pathoram::net::{Server, ServerBackend, ServerConfig};
use pathoram::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pathoram",
    version,
    about = "Path ORAM experiments and bucket server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record post-access stash sizes over a grid of bucket sizes and heights.
    StashSweep(SweepArgs),
    /// Chi-square tests on the leaves revealed to the server.
    ObliviousTest(ObliviousArgs),
    /// Turn sweep CSVs into plot data and a gnuplot script.
    Plots {
        /// Sweep CSV files.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(short, long, default_value = "plots")]
        output: PathBuf,
    },
    /// Run the bucket server.
    Serve(ServeArgs),
    /// Per-access latency and traffic.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Block count N (default 2^L per cell).
    #[arg(short = 'n', long)]
    capacity: Option<u64>,
    /// Block size B in bytes.
    #[arg(short = 'b', long)]
    block_size: Option<u32>,
    /// Comma-separated bucket sizes.
    #[arg(short = 'z', long, value_delimiter = ',')]
    bucket_sizes: Option<Vec<u32>>,
    /// Comma-separated tree heights.
    #[arg(short = 'l', long, value_delimiter = ',')]
    heights: Option<Vec<u32>>,
    #[arg(short, long)]
    workload: Option<WorkloadKind>,
    #[arg(short, long)]
    accesses: Option<u64>,
    #[arg(short, long)]
    seed: Option<u64>,
    /// memory, file:<dir>, remote:<addr> or loopback.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    integrity: bool,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl SweepArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.capacity.is_some() {
            c.capacity = self.capacity;
        }
        c.block_size = self.block_size.unwrap_or(c.block_size);
        c.bucket_sizes = self.bucket_sizes.unwrap_or(c.bucket_sizes);
        c.heights = self.heights.unwrap_or(c.heights);
        c.workload = self.workload.unwrap_or(c.workload);
        c.accesses = self.accesses.unwrap_or(c.accesses);
        c.seed = self.seed.unwrap_or(c.seed);
        c.backend = self.backend.unwrap_or(c.backend);
        c.integrity |= self.integrity;
        c.output = self.output.unwrap_or(c.output);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ObliviousArgs {
    #[arg(short = 'l', long, default_value_t = 10)]
    height: u32,
    #[arg(short = 'z', long, default_value_t = 4)]
    bucket_size: u32,
    #[arg(short = 'b', long, default_value_t = 16)]
    block_size: u32,
    #[arg(short = 'n', long)]
    capacity: Option<u64>,
    /// Accesses per workload; at least 100 * 2^L [default: max(10^5, 100 * 2^L)].
    #[arg(long)]
    samples: Option<u64>,
    #[arg(short, long, default_value_t = 0)]
    seed: u64,
    /// Also run the battery against a client that never remaps.
    #[arg(long)]
    negative_control: bool,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(short = 'l', long, default_value_t = 10)]
    height: u32,
    #[arg(short = 'z', long, default_value_t = 4)]
    bucket_size: u32,
    #[arg(short = 'b', long, default_value_t = 64)]
    block_size: u32,
    #[arg(short = 'n', long)]
    capacity: Option<u64>,
    #[arg(long)]
    integrity: bool,
}

impl TreeArgs {
    fn params(&self) -> Result<StoreParams> {
        let capacity = self.capacity.unwrap_or(1u64 << self.height.min(63));
        let geometry = TreeGeometry::new(self.height, self.bucket_size, self.block_size, capacity)?;
        Ok(StoreParams::new(geometry, self.integrity))
    }
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// Keep the tree in this file instead of memory.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(short, long, default_value_t = 10_000)]
    accesses: u64,
    #[arg(short, long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = "uniform")]
    workload: WorkloadKind,
    #[arg(long, default_value = "memory")]
    backend: BackendKind,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::StashSweep(args) => {
            let config = args.into_config()?;
            let cells = harness::run_stash_experiment(&config)?;
            for cell in &cells {
                let t = &cell.trace;
                let s = t.summary().expect("validated access count");
                println!(
                    "Z={} L={} N={} max={} mean={:.4} p999={}",
                    t.bucket_size, t.height, t.capacity, s.max, s.mean, s.p999
                );
            }
            println!("wrote {}", config.output.display());
            Ok(true)
        }
        Command::ObliviousTest(args) => {
            let config = ObliviousConfig {
                height: args.height,
                bucket_size: args.bucket_size,
                block_size: args.block_size,
                capacity: args.capacity,
                samples: args
                    .samples
                    .unwrap_or(100_000u64.max(100 << args.height.min(40))),
                seed: args.seed,
            };
            let report = harness::run_obliviousness_test(&config)?;
            println!("{report}");
            let mut ok = report.passed();
            if args.negative_control {
                let control = harness::run_negative_control(&config)?;
                println!("\nnegative control (remap disabled, expected to fail):\n{control}");
                ok &= !control.passed();
            }
            Ok(ok)
        }
        Command::Plots { csv, output } => {
            let traces = harness::read_csvs(&csv)?;
            for path in harness::emit_plots(&traces, &output)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Serve(args) => {
            let params = args.tree.params()?;
            let backend = match args.file {
                Some(path) => ServerBackend::File(path),
                None => ServerBackend::Memory,
            };
            let server = Server::bind(args.listen.as_str(), ServerConfig::new(params, backend))?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
            Ok(true)
        }
        Command::Bench(args) => {
            let t = &args.tree;
            let config = BenchConfig {
                height: t.height,
                bucket_size: t.bucket_size,
                block_size: t.block_size,
                capacity: t.capacity,
                accesses: args.accesses,
                seed: args.seed,
                workload: args.workload,
                backend: args.backend,
                integrity: t.integrity,
            };
            println!("{}", harness::run_bench(&config)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err @ Error::Usage(_)) => {
            eprintln!("pathoram: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("pathoram: {err}");
            ExitCode::FAILURE
        }
    }
}
