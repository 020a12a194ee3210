//! Config-driven batch runner for quantized MIMO experiments.

pub mod config;
pub mod output;
pub mod sweep;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use output::{write_results, Format, PointResult, ResultsFile};
pub use sweep::{run_sweep, RunError, SweepOptions};
