//! File formats, parallel sweeps and the `cellfree` command line on top of
//! `cellfree-core`.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{ConfigBuilder, Preset, RunConfig};
pub use error::SimError;
pub use runner::{run_plan, SweepRun};
