//! Penalty search: the smallest shortfall price whose solution misses the
//! target in few enough scenarios.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plant::{Plant, KG_PER_TON};
use crate::scenario::{BaleSequence, Scenario};

use super::benders::{BendersOptions, BendersOutcome, BendersSolver};
use super::layout::{FirstStage, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionParams {
    /// Allowed fraction of scenarios that miss the target.
    pub risk: f64,
    pub penalty_high: f64,
    pub penalty_low: f64,
    /// Stop once half the bracket is at most this wide.
    pub width: f64,
    /// Slack on the allowed fraction.
    pub slack: f64,
    /// Shortfalls at or below this count as meeting the target.
    pub shortfall_tol: f64,
}

impl Default for BisectionParams {
    fn default() -> Self {
        BisectionParams { risk: 0.1, penalty_high: 1e7, penalty_low: 0.0, width: 0.01, slack: 0.01, shortfall_tol: 1e-6 }
    }
}

impl BisectionParams {
    /// Violation count at which a penalty is judged too small.
    /// Values within rounding of a whole count snap to it, so (0.2 + 0.01) * 100
    /// compares as exactly 21.
    pub fn threshold(&self, scenarios: usize) -> f64 {
        let n = scenarios as f64;
        let t = self.risk * n + self.slack * n;
        if (t - t.round()).abs() <= 1e-9 * t.abs().max(1.0) {
            t.round()
        } else {
            t
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Feasible,
    TargetUnachievable,
}

/// One penalty value tried by the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStep {
    pub penalty: f64,
    pub violated: usize,
    pub objective: f64,
    pub benders_iterations: usize,
    pub lower_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub layout: Layout,
    pub first: FirstStage,
    /// Second-stage values per scenario, in [`Layout`] order.
    pub recourse: Vec<Vec<f64>>,
    /// Scenarios whose shortfall exceeds the tolerance.
    pub violated: usize,
    pub penalty: f64,
    /// Penalised surrogate objective at `penalty`.
    pub objective: f64,
    /// $ per dry ton delivered, averaged over the scenarios; `None` when nothing is delivered.
    pub true_cost: Option<f64>,
    /// Mean dry feed to the reactor, kg per period.
    pub mean_feed: f64,
    pub status: SolveStatus,
    pub steps: Vec<PenaltyStep>,
}

impl SolveResult {
    pub fn satisfied(&self) -> usize {
        self.recourse.len() - self.violated
    }

    pub fn shortfall(&self, s: usize) -> f64 {
        self.recourse[s][self.layout.shortfall()]
    }
}

fn count_violations(out: &BendersOutcome, layout: &Layout, tol: f64) -> usize {
    out.recourse.iter().filter(|x| x[layout.shortfall()] > tol).count()
}

/// Largest target rate (kg per period, to within `resolution`) whose maximum-penalty
/// solve misses it in fewer scenarios than the threshold.
pub fn achievable_target(
    plant: &Plant,
    seq: &BaleSequence,
    scenarios: &[Scenario],
    params: &BisectionParams,
    options: BendersOptions,
    resolution: f64,
) -> Result<f64> {
    let mut solver = BendersSolver::new(plant, seq, scenarios, options)?;
    let layout = solver.layout().clone();
    let threshold = params.threshold(scenarios.len());
    let mut passes = |rate: f64| -> Result<bool> {
        solver.set_target(rate);
        let out = solver.solve(params.penalty_high)?;
        Ok((count_violations(&out, &layout, params.shortfall_tol) as f64) < threshold)
    };
    let (mut lo, mut hi) = (0.0, plant.config.reactor_capacity);
    if passes(hi)? {
        return Ok(hi);
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Run the penalty bisection with decomposition as the inner solver.
pub fn bisection_search(
    plant: &Plant,
    seq: &BaleSequence,
    scenarios: &[Scenario],
    params: &BisectionParams,
    options: BendersOptions,
) -> Result<SolveResult> {
    let mut solver = BendersSolver::new(plant, seq, scenarios, options)?;
    let layout = solver.layout().clone();
    let threshold = params.threshold(scenarios.len());
    let mut steps = Vec::new();
    let run = |solver: &mut BendersSolver, penalty: f64, steps: &mut Vec<PenaltyStep>| -> Result<(BendersOutcome, usize)> {
        let out = solver.solve(penalty)?;
        let violated = count_violations(&out, &layout, params.shortfall_tol);
        log::debug!("penalty {penalty:.6e}: {violated} scenarios short after {} iterations", out.iterations);
        steps.push(PenaltyStep {
            penalty,
            violated,
            objective: out.objective,
            benders_iterations: out.iterations,
            lower_bound: out.lower_bound,
        });
        Ok((out, violated))
    };

    let (mut high, mut low) = (params.penalty_high, params.penalty_low);
    let (first_out, first_violated) = run(&mut solver, high, &mut steps)?;
    if first_violated as f64 >= threshold {
        let steps = std::mem::take(&mut steps);
        return finish(plant, seq, layout, first_out, first_violated, high, SolveStatus::TargetUnachievable, steps);
    }
    // The upper end of the bracket always holds a solution that passed the count.
    let mut accepted = (first_out, first_violated, high);
    while (high - low) / 2.0 > params.width {
        let penalty = 0.5 * (high + low);
        let (out, violated) = run(&mut solver, penalty, &mut steps)?;
        if violated as f64 >= threshold {
            low = penalty;
        } else {
            high = penalty;
            accepted = (out, violated, penalty);
        }
    }
    // When the last step overshot, report the solution at the upper end instead.
    let (out, violated, penalty) = accepted;
    finish(plant, seq, layout, out, violated, penalty, SolveStatus::Feasible, steps)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    plant: &Plant,
    seq: &BaleSequence,
    layout: Layout,
    out: BendersOutcome,
    violated: usize,
    penalty: f64,
    status: SolveStatus,
    steps: Vec<PenaltyStep>,
) -> Result<SolveResult> {
    let first = FirstStage::from_vec(&layout, &out.first)?;
    let mean_feed = mean_reactor_feed(plant, &layout, &out.recourse);
    let delivered_tons = mean_feed * seq.len() as f64 / KG_PER_TON;
    let true_cost = crate::evaluator::cost_per_ton(plant, seq, delivered_tons).map(|c| c.total);
    Ok(SolveResult {
        layout,
        first,
        recourse: out.recourse,
        violated,
        penalty,
        objective: out.objective,
        true_cost,
        mean_feed,
        status,
        steps,
    })
}

/// Target-row level implied by the slack columns: `target - shortfall + surplus`.
fn mean_reactor_feed(plant: &Plant, layout: &Layout, recourse: &[Vec<f64>]) -> f64 {
    if recourse.is_empty() {
        return 0.0;
    }
    let r = plant.config.target_rate;
    let total: f64 = recourse.iter().map(|x| r - x[layout.shortfall()] + x[layout.surplus()]).sum();
    total / recourse.len() as f64
}
