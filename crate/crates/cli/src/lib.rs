//! Library half of the `lerg` command: configuration, corpus ingestion,
//! model construction, artifact writers and subcommands.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod model;
pub mod report;
