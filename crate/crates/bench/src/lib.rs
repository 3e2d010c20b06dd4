//! Benchmark driver: dataset generation, training of every learner, the
//! preference sweep scored by off-policy evaluation with bootstrap
//! intervals, oracle calibration and table/plot emission.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{Algorithm, BenchConfig};
pub use pipeline::{run_all, Manifest, RunSummary};
pub use report::{emit_plot, emit_table, CalibrationRow, ResultRow};
