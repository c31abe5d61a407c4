//! Files, processes and the command line around `mixturepfn-core`.

pub mod bridge;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod model_file;
pub mod pipeline;
pub mod synth;
