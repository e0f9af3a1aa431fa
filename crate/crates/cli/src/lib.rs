//! Run configuration and subcommands behind the `mou` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_ablate, cmd_evaluate, cmd_flops, cmd_inspect, cmd_train};
pub use config::RunConfig;
