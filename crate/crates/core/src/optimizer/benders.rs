//! Multi-cut L-shaped decomposition over the scenario blocks.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{solve_lp_from, verify_farkas, Basis, Column, LpModel, Sense, Status, Tolerances, VarId};
use crate::plant::{EquipmentKind, NodeId, Plant};
use crate::scenario::{BaleSequence, Scenario};

use super::layout::Layout;
use super::recourse::Recourse;
use super::model::{build_subproblem, first_stage_columns, scenario_block, update_rhs, Block, BlockParams};

#[derive(Debug, Clone, Copy)]
pub struct BendersOptions {
    /// Stop when `upper - lower <= gap * max(1, |upper|)`.
    pub gap: f64,
    pub max_iterations: usize,
    pub tolerances: Tolerances<f64>,
}

impl Default for BendersOptions {
    fn default() -> Self {
        BendersOptions { gap: 1e-7, max_iterations: 500, tolerances: Tolerances::default() }
    }
}

/// `coeffs . z  (>= or <=)  constant`, plus the scenario value variable for optimality cuts.
#[derive(Debug, Clone)]
pub struct Cut {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
    /// Scenario whose value the cut bounds; `None` for a feasibility cut.
    pub scenario: Option<usize>,
    /// Smallest shortfall penalty for which the cut stays valid.
    pub valid_from: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRecord {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
}

#[derive(Debug, Clone)]
pub struct BendersOutcome {
    /// Flattened first stage in [`Layout`] order.
    pub first: Vec<f64>,
    pub objective: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub log: Vec<BoundRecord>,
    /// Recourse values of each scenario at `first`.
    pub recourse: Vec<Vec<f64>>,
}

pub fn write_bound_log(log: &[BoundRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "iteration,lower,upper,optimality_cuts,feasibility_cuts")?;
    for r in log {
        writeln!(out, "{},{:?},{:?},{},{}", r.iteration, r.lower, r.upper, r.optimality_cuts, r.feasibility_cuts)?;
    }
    Ok(())
}

struct Sub {
    block: Block,
    model: LpModel<f64>,
    basis: Option<Basis>,
    recourse: Option<Recourse>,
}

enum SubResult {
    Value { objective: f64, x: Vec<f64>, cut: Cut },
    /// Feasibility cuts tagged with a constraint key and violation size.
    Infeasible(Vec<(usize, f64, Cut)>),
}

/// Projected constraints considered per infeasible scenario and iteration.
const CUTS_PER_SCENARIO: usize = 40;
/// Feasibility cuts admitted to the master per iteration.
const FEASIBILITY_CUTS_PER_ITERATION: usize = 300;

/// Solver state kept across penalty values so that cuts can be reused.
pub struct BendersSolver {
    layout: Layout,
    first_cols: Vec<Column<f64>>,
    first_names: Vec<String>,
    subs: Vec<Sub>,
    pool: Vec<Cut>,
    value_floor: f64,
    options: BendersOptions,
}

impl BendersSolver {
    pub fn new(plant: &Plant, seq: &BaleSequence, scenarios: &[Scenario], options: BendersOptions) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Model("decomposition needs at least one scenario".into()));
        }
        let layout = Layout::new(plant, seq.len());
        let (mut first_cols, first_names) = first_stage_columns(plant, &layout, seq, scenarios);
        // Conveyor speeds only loosen their own capacity rows and cost nothing, so the top speed is optimal.
        for i in 0..layout.nodes {
            if plant.graph.node(NodeId(i)).kind == EquipmentKind::Transport {
                for t in 0..layout.horizon {
                    let c = &mut first_cols[layout.speed(NodeId(i), t)];
                    c.lower = c.upper;
                }
            }
        }
        let params = BlockParams { penalty: 0.0, weight: 1.0 / scenarios.len() as f64, hard_target: false };
        let z0: Vec<f64> = first_cols.iter().map(|c| c.lower).collect();
        let subs = scenarios
            .iter()
            .enumerate()
            .map(|(s, sc)| {
                let block = scenario_block(plant, &layout, seq, sc, params, &format!("_s{s}"))?;
                let model = build_subproblem(&block, &z0);
                let recourse = Recourse::analyse(&block, &[layout.shortfall(), layout.surplus()]);
                Ok(Sub { block, model, basis: None, recourse })
            })
            .collect::<Result<Vec<_>>>()?;
        // Delivered dry matter per period never exceeds the reactor limit.
        let value_floor = -(layout.horizon as f64) * plant.config.reactor_capacity * params.weight;
        Ok(BendersSolver { layout, first_cols, first_names, subs, pool: Vec::new(), value_floor, options })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn cut_count(&self) -> usize {
        self.pool.len()
    }

    /// Change the required average feed rate. Cuts priced through the target row are dropped.
    pub fn set_target(&mut self, rate: f64) {
        for sub in &mut self.subs {
            if let Some(row) = sub.block.rows.last_mut() {
                row.rhs = rate;
            }
        }
        self.pool.retain(|c| c.valid_from == 0.0);
    }

    fn master(&self, penalty: f64) -> LpModel<f64> {
        let mut m = LpModel::new();
        for (c, n) in self.first_cols.iter().zip(&self.first_names) {
            m.add_named_var(n.clone(), c.lower, c.upper, c.cost);
        }
        let nz = self.first_cols.len();
        for s in 0..self.subs.len() {
            m.add_named_var(format!("eta_{s}"), self.value_floor, f64::INFINITY, 1.0);
        }
        for cut in self.pool.iter().filter(|c| c.valid_from <= penalty) {
            push_cut(&mut m, cut, nz);
        }
        m
    }

    /// Minimise the penalised objective for the given shortfall penalty.
    pub fn solve(&mut self, penalty: f64) -> Result<BendersOutcome> {
        let u = self.layout.shortfall();
        for sub in &mut self.subs {
            sub.model.cols[u].cost = penalty;
        }
        let nz = self.first_cols.len();
        let tol = self.options.tolerances;
        let mut master = self.master(penalty);
        let mut master_basis: Option<Basis> = None;
        let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;
        let mut log = Vec::new();
        // Cuts only accumulate, so the best master value seen is a valid bound.
        let mut lower = f64::NEG_INFINITY;
        for iteration in 1..=self.options.max_iterations {
            let mut ms = solve_lp_from(&master, &tol, master_basis.as_ref());
            if ms.status == Status::IterationLimit && master_basis.is_some() {
                ms = solve_lp_from(&master, &tol, None);
            }
            match ms.status {
                Status::Optimal => {}
                Status::Infeasible => return Err(Error::Solver("first stage admits no feasible recourse".into())),
                s => return Err(Error::Solver(format!("master problem ended with {s:?}"))),
            }
            master_basis = ms.basis.clone();
            lower = lower.max(ms.objective);
            let z = &ms.x[..nz];
            let first_cost: f64 = self.first_cols.iter().zip(z).map(|(c, v)| c.cost * v).sum();
            let eta = &ms.x[nz..];

            let results: Vec<SubResult> = self
                .subs
                .par_iter_mut()
                .enumerate()
                .map(|(s, sub)| solve_sub(sub, s, z, penalty, &tol))
                .collect::<Result<_>>()?;

            let (mut opt_cuts, mut feas_cuts) = (0, 0);
            let mut total = first_cost;
            let mut xs = Vec::with_capacity(results.len());
            let mut feasible = true;
            // Strongest violation of each block constraint across scenarios.
            let mut strongest: std::collections::BTreeMap<usize, (f64, Cut)> = std::collections::BTreeMap::new();
            for (s, r) in results.into_iter().enumerate() {
                match r {
                    SubResult::Infeasible(cuts) => {
                        feasible = false;
                        for (key, amount, cut) in cuts {
                            match strongest.get(&key) {
                                Some((a, _)) if *a >= amount => {}
                                _ => {
                                    strongest.insert(key, (amount, cut));
                                }
                            }
                        }
                    }
                    SubResult::Value { objective, x, cut } => {
                        total += objective;
                        xs.push(x);
                        if objective > eta[s] + 1e-9 * (1.0 + objective.abs()) {
                            opt_cuts += 1;
                            push_cut(&mut master, &cut, nz);
                            self.pool.push(cut);
                        }
                    }
                }
            }
            let mut chosen: Vec<(f64, Cut)> = strongest.into_values().collect();
            chosen.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            for (_, cut) in chosen.into_iter().take(FEASIBILITY_CUTS_PER_ITERATION) {
                feas_cuts += 1;
                push_cut(&mut master, &cut, nz);
                self.pool.push(cut);
            }
            if feasible && best.as_ref().map_or(true, |b| total < b.0) {
                best = Some((total, z.to_vec(), xs));
            }
            let upper = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            log.push(BoundRecord { iteration, lower, upper, optimality_cuts: opt_cuts, feasibility_cuts: feas_cuts });
            let converged = upper - lower <= self.options.gap * upper.abs().max(1.0);
            if best.is_some() && (converged || opt_cuts + feas_cuts == 0) {
                let (objective, first, recourse) = best.expect("incumbent present");
                return Ok(BendersOutcome { first, objective, lower_bound: lower, iterations: iteration, log, recourse });
            }
        }
        Err(Error::Solver(format!("decomposition did not converge in {} iterations", self.options.max_iterations)))
    }
}

/// Adds a cut scaled by a power of two so its largest coefficient is near one.
/// Unscaled cuts span several orders of magnitude and stall the master's pricing.
fn push_cut(m: &mut LpModel<f64>, cut: &Cut, nz: usize) {
    let mut coeffs: Vec<(VarId, f64)> = cut.coeffs.iter().map(|&(j, a)| (VarId(j), a)).collect();
    let (sense, eta) = match cut.scenario {
        Some(s) => (Sense::Ge, Some((VarId(nz + s), 1.0))),
        None => (Sense::Le, None),
    };
    coeffs.extend(eta);
    let largest = coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
    let scale = if largest > 0.0 && largest.is_finite() { (-largest.log2().round()).exp2() } else { 1.0 };
    for c in &mut coeffs {
        c.1 *= scale;
    }
    m.add_row(coeffs, sense, cut.constant * scale);
}

/// `-T' y` over the first-stage columns touched by the block.
fn first_stage_gradient(block: &Block, y: &[f64]) -> Vec<(usize, f64)> {
    let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (r, &yi) in block.rows.iter().zip(y) {
        if yi == 0.0 {
            continue;
        }
        for &(j, a) in &r.first {
            *acc.entry(j).or_insert(0.0) -= yi * a;
        }
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

fn solve_sub(sub: &mut Sub, s: usize, z: &[f64], penalty: f64, tol: &Tolerances<f64>) -> Result<SubResult> {
    if let Some(rec) = &sub.recourse {
        return Ok(determined_sub(&sub.block, rec, s, z, penalty, tol.feas));
    }
    update_rhs(&mut sub.model, &sub.block, z);
    let mut sol = solve_lp_from(&sub.model, tol, sub.basis.as_ref());
    if sol.status == Status::IterationLimit && sub.basis.is_some() {
        sol = solve_lp_from(&sub.model, tol, None);
    }
    if let Some(b) = sol.basis.clone() {
        sub.basis = Some(b);
    }
    match sol.status {
        Status::Optimal => {
            let y = &sol.row_duals;
            let mut constant: f64 = sub.block.rows.iter().zip(y).map(|(r, &yi)| r.rhs * yi).sum();
            for (c, &d) in sub.model.cols.iter().zip(&sol.reduced_costs) {
                if d > 0.0 && c.lower.is_finite() {
                    constant += d * c.lower;
                } else if d < 0.0 && c.upper.is_finite() {
                    constant += d * c.upper;
                }
            }
            let grad = first_stage_gradient(&sub.block, y);
            let coeffs = grad.into_iter().map(|(j, v)| (j, -v)).collect();
            let penalty_dual = y.last().copied().unwrap_or(0.0).max(0.0);
            Ok(SubResult::Value {
                objective: sol.objective,
                x: sol.x,
                cut: Cut { coeffs, constant, scenario: Some(s), valid_from: penalty_dual },
            })
        }
        Status::Infeasible => {
            let cert = sol
                .farkas
                .as_deref()
                .and_then(|y| verify_farkas(&sub.model, y, tol.feas))
                .or_else(|| {
                    let cold = solve_lp_from(&sub.model, tol, None);
                    cold.farkas.as_deref().and_then(|y| verify_farkas(&sub.model, y, tol.feas))
                })
                .ok_or_else(|| Error::Solver(format!("scenario {s}: infeasibility could not be certified")))?;
            let y = &cert.row_multipliers;
            let ceiling = crate::lp::box_maximum(&sub.model, y, tol.feas);
            let fixed: f64 = sub.block.rows.iter().zip(y).map(|(r, &yi)| r.rhs * yi).sum();
            // y'(h - T z) <= ceiling must hold for every first stage with feasible recourse.
            let coeffs = first_stage_gradient(&sub.block, y);
            // Farkas cuts aggregate many rows, so they get a key of their own.
            let key = usize::MAX - s;
            Ok(SubResult::Infeasible(vec![(key, cert.margin, Cut { coeffs, constant: ceiling - fixed, scenario: None, valid_from: 0.0 })]))
        }
        st => Err(Error::Solver(format!("scenario {s}: subproblem ended with {st:?}"))),
    }
}

/// Value and cut of a scenario whose flows follow from the first stage alone.
fn determined_sub(block: &Block, rec: &Recourse, s: usize, z: &[f64], penalty: f64, feas: f64) -> SubResult {
    let mut x = rec.evaluate(block, z);
    let violated = rec.violations(block, z, &x, feas, CUTS_PER_SCENARIO);
    if !violated.is_empty() {
        let cuts = violated
            .into_iter()
            .map(|v| (v.key, v.amount, Cut { coeffs: v.constraint.coeffs, constant: v.constraint.rhs, scenario: None, valid_from: 0.0 }))
            .collect();
        return SubResult::Infeasible(cuts);
    }
    let costs: Vec<(usize, f64)> = block.cols.iter().enumerate().filter(|(_, c)| c.cost != 0.0).map(|(j, c)| (j, c.cost)).collect();
    let mut weights = costs.clone();
    let mut objective: f64 = costs.iter().map(|&(j, c)| c * x[j]).sum();
    let mut valid_from = 0.0;
    if let Some(i) = rec.target_row() {
        let r = &block.rows[i];
        let n = x.len();
        let (u, j) = (n - 2, n - 1);
        let delivered: Vec<(usize, f64)> = r.second.iter().copied().filter(|e| e.0 != u && e.0 != j).collect();
        let level: f64 = delivered.iter().map(|&(k, a)| a * x[k]).sum();
        let gap = r.rhs - level;
        if gap > 0.0 {
            x[u] = gap;
            objective += penalty * gap;
            valid_from = penalty;
            weights.extend(delivered.iter().map(|&(k, a)| (k, -penalty * a)));
        } else {
            x[j] = -gap;
        }
        if gap > 0.0 {
            // The shortfall term contributes penalty * rhs to the constant.
            let (constant, grad) = rec.project(block, &weights);
            let cut = Cut {
                coeffs: grad.into_iter().map(|(k, v)| (k, -v)).collect(),
                constant: constant + penalty * r.rhs,
                scenario: Some(s),
                valid_from,
            };
            return SubResult::Value { objective, x, cut };
        }
    }
    let (constant, grad) = rec.project(block, &weights);
    let cut = Cut { coeffs: grad.into_iter().map(|(k, v)| (k, -v)).collect(), constant, scenario: Some(s), valid_from };
    SubResult::Value { objective, x, cut }
}
