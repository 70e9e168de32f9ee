//! Batch experiment runner and bound verifier: configures an instance,
//! runs the iteration, evaluates all applicable bounds, brute-force checks
//! them, and emits CSV plus a pass/fail report.

pub mod config;
pub mod output;
pub mod runner;

pub use config::ExperimentConfig;
pub use output::{emit_csv, format_nat, ResultRow, Status, TrajectoryRow};
pub use runner::{counter_from_desc, oracle_report, run_experiment, ExperimentOutput, RunOptions};
