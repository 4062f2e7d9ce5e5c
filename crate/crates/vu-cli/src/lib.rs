//! Library surface of the `vu` command-line tool: configuration, the
//! end-to-end pipeline, and the run manifest.

pub mod config;
pub mod manifest;
pub mod pipeline;
