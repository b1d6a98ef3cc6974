//! Out-of-sample checks of a plan: simulation, reliability, cost metrics and sample-size stability.

mod metrics;
mod reliability;
mod simulate;
mod stability;

pub use metrics::{compute_metrics, cost_per_ton, utilization, CostPerTon, Metrics};
pub use reliability::{out_of_sample_reliability, EventTotals, OutOfSample, ReliabilityReport, FEED_TOL};
pub use simulate::{forward_simulate, Trajectory, ViolationEvent, ViolationKind, LIMIT_TOL};
pub use stability::{relative_spread, replication_seed, stability_test, StabilityRow};

#[cfg(test)]
mod tests;
