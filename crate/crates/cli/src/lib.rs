//! Experiment runner for the self-play iterated prisoner's dilemma toolkit:
//! JSON experiment specs in, CSV and JSON data files out.

pub mod commands;
pub mod spec;
pub mod verify;

pub use commands::{run_experiment, Outcome};
pub use spec::{ExperimentSpec, Kind};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IPDQ_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ipdq-out";
