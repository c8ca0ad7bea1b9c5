//! Storage backends, wire protocol, client-state files and the experiment
//! harness for the `pathoram-core` engine.

pub mod backend;
pub mod error;
pub mod file_store;
pub mod harness;
pub mod net;
pub mod state_file;

pub use backend::{AnyStore, BackendKind};
pub use error::{Error, Result};
pub use pathoram_core as core;
