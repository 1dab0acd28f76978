//! File formats, configuration and the command-line interface around
//! `feedback_miner_core`.

pub mod bundle;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod io;
