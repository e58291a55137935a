//! Command-line runner and file formats for `noisebias-core`.
//!
//! Runs are written as `<out>/<label>/<seed>/trajectory.csv` plus a
//! `manifest.json` that is enough to replay them, with a `summary.json` at
//! the root of the output directory.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use error::{LabError, Result};
