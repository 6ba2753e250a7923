//! Pipelines behind the `stego` command: corpus preparation, n-gram
//! training, embedding, extraction, metrics and the benchmark grid.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
