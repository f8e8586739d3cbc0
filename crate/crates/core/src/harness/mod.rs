//! Config-driven experiment sweeps, CSV output and post-processing.

pub mod config;
pub mod experiment;
pub mod record;
pub mod scaling;

pub use config::{ExperimentConfig, OneOrMany, SweepPoint, SweepVar, SystemChoice, Theta0};
pub use experiment::{
    base_system, build_problem, diagnose_problem, run_diagnostics, run_experiment, run_sweep,
    DiagnosticReport, ExperimentOutput, Problem,
};
pub use record::{read_csv, read_csv_path, write_csv, write_csv_path, ExperimentRecord, CSV_HEADER};
pub use scaling::{final_errors, linear_fit, sqrt_m_scaling, ScalingPoint, ScalingReport};
