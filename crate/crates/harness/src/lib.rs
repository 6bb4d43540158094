//! Experiment harness for `martsparse`: seeded trial corpora checked in
//! parallel or sequentially, sharpness sweeps, and the file formats used by
//! the `martsparse` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod report;
pub mod runner;
pub mod sharpness;

pub use config::{Config, Suite};
pub use error::{HarnessError, Result};
pub use runner::{run, Execution, RunResult};
