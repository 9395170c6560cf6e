//! Convergence-study harness for the fractional subdiffusion solvers:
//! experiment configuration, error tables and contraction sweeps.

pub mod config;
pub mod experiments;
pub mod table;

pub use config::{ExampleKind, ExperimentConfig, OutputFormat, ReferenceMode, ScheduleSpec, SmootherChoice};
pub use experiments::{run_contraction_sweep, run_example1, run_example2, run_table};
pub use table::{Cell, ErrorTable};

/// Process exit status for a failed command: 3 for numerical failures
/// (breakdown, divergence, undefined error metric), 2 for everything else.
pub fn exit_code(err: &subdiff_core::Error) -> u8 {
    match err {
        e if e.is_numeric() => 3,
        subdiff_core::Error::UndefinedMetric(_) => 3,
        _ => 2,
    }
}
