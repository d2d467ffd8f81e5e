//! File formats, checkpoints, configuration and the command
//! implementations behind the `trajcast` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
