//! Experiment orchestration: study grids, CSV tables and run manifests.

mod run;
mod spec;
mod table;

pub use run::{
    compute_experiment, evaluation_seed, mean_value_first_stage, run_experiment, CellFailure, ExperimentReport, Manifest,
    ToleranceRecord,
};
pub use spec::{ExperimentSpec, Overrides, Study};
pub use table::{num, pct_change, Table};

#[cfg(test)]
mod tests;
