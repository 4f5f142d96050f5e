//! HTTP gateway, admin API and command-line client for the polystore.

pub mod cli;
pub mod client;
pub mod server;

pub use client::{Client, Reply, TransportError};
pub use server::{spawn, ServeError, ServerHandle};
