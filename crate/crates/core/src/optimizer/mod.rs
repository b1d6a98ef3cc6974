//! Scenario-based optimisation of speeds and starting inventory.

mod benders;
mod bisection;
mod layout;
mod model;
mod recourse;
pub mod toy;

pub use bisection::{achievable_target, bisection_search, BisectionParams, PenaltyStep, SolveResult, SolveStatus};
pub use benders::{write_bound_log, BendersOptions, BendersOutcome, BendersSolver, BoundRecord, Cut};
pub use recourse::{Projected, Recourse, Violation};
pub use layout::{FirstStage, Layout};
pub use model::{
    build_extensive_form, build_mean_value, build_subproblem, first_stage_columns, scenario_block, update_rhs, Block,
    BlockParams, CoupledRow, ExtensiveForm,
};

#[cfg(test)]
mod tests;
