//! Experiment harness behind the `tiercache` binary: config ingestion,
//! scenario presets, sweeps, validation and CSV/JSON emission.

mod commands;
mod config;
mod table;
mod validate;

use crate::error::Error;

pub use commands::{
    allocation_problem, cmd_analytic, cmd_optimize, cmd_simulate, load_aggregation_curves,
    sim_config, sweep_argmins, ttl_sweep, AggregationCurve, Output, TtlPoint,
};
pub use config::{
    ContentsSection, ExperimentConfig, ExperimentSection, GridSpec, Method, Resolved, Scenario,
    SearchSection, TierSection, TopologySection,
};
pub use table::{write_atomic, Cell, Table};
pub use validate::{
    run_validation, CheckRow, Criterion, Formulas, ValidationReport, ValidationSettings,
};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

/// Exit status of a failed validation run.
pub const VALIDATION_FAILURE: i32 = 1;
