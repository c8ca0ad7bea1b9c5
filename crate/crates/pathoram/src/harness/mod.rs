//! Experiment harness: stash-size sweeps, the obliviousness battery, plot
//! data and micro-benchmarks.

mod bench;
mod config;
mod oblivious;
mod plots;
mod stash;
pub mod stats;
mod workload;

pub use bench::{run_bench, BenchConfig, BenchReport};
pub use config::ExperimentConfig;
pub use oblivious::{
    revealed_leaves, run_negative_control, run_obliviousness_test, ObliviousConfig,
    ObliviousReport, TestLine, SIGNIFICANCE,
};
pub use plots::{emit_plots, parse_csv, read_csvs, CellTraces};
pub use stash::{
    cell_name, csv_path, run_cell, run_stash_experiment, summary_path, write_cell, CellResult,
    StashSummary, StashTrace, CSV_HEADER,
};
pub use workload::{SeededRun, Workload, WorkloadKind};
