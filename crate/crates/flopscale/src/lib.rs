//! File formats, built-in tables and the command line for `flopscale-core`.

pub mod artifact;
pub mod cli;
pub mod format;
pub mod io;
pub mod tables;

pub use artifact::{ArtifactFile, ArtifactKind, Provenance};
pub use io::{load_latency, load_points, load_runs, LoadOptions, LoadReport, RunFormat};
