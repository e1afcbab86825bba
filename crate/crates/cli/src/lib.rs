//! Server and offline tooling behind the `sketchvox` binary.

pub mod commands;
pub mod server;
