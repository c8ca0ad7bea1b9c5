//! Length-prefixed binary protocol between a client and an untrusted bucket
//! server.

mod remote;
mod server;
pub mod wire;

pub use remote::RemoteStore;
pub use server::{
    debug_hook_from_env, serve_connection, spawn_loopback, Server, ServerBackend, ServerConfig,
    DEBUG_HOOK_ENV,
};
