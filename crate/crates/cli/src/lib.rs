//! Command-line front end: dataset ingestion, run configuration and the
//! experiment commands.

pub mod config;
pub mod ingest;
pub mod run;

pub use config::RunConfig;
pub use ingest::{ingest_csv, ingest_idx, DatasetManifest};
pub use run::{run, Command};
