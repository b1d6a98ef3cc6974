use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{spec_error, ExperimentSpec, Study};
use super::table::{num, opt, pct_change, Table};
use crate::error::{Error, Result};
use crate::evaluator::{
    compute_metrics, forward_simulate, out_of_sample_reliability, replication_seed, stability_test, Metrics, OutOfSample,
    ReliabilityReport,
};
use crate::lp::{solve_lp, Status, Tolerances};
use crate::optimizer::{achievable_target, bisection_search, build_mean_value, BendersOptions, BisectionParams, FirstStage, SolveStatus};
use crate::plant::{EquipmentKind, MoistureLevel, PerLevel, Plant, PlantDocument, KG_PER_TON};
use crate::scenario::{generate_scenario_set, make_bale_sequence, BaleSequence, FailureMode, GenOptions, Pattern};

/// One solve-and-evaluate job.
#[derive(Debug, Clone)]
struct Run {
    plant: Plant,
    seq: BaleSequence,
    gen: GenOptions,
    risk: f64,
    scenarios: usize,
    seed: u64,
    /// Replace the plant target by the largest one the sample supports at `risk`.
    search_target: bool,
}

/// A table row: the mean over its runs, compared against `base` when set.
#[derive(Debug, Clone)]
struct Row {
    key: Vec<String>,
    runs: Vec<Run>,
    base: Option<usize>,
}

#[derive(Debug, Clone)]
struct RunResult {
    target: f64,
    status: SolveStatus,
    metrics: Metrics,
    violated: usize,
    penalty: f64,
    oos: ReliabilityReport,
    bypass: f64,
    /// Mean stored kg per period over the training scenarios.
    trace: Vec<f64>,
}

/// Row means; `None` when any of its runs failed.
#[derive(Debug, Clone)]
struct RowResult {
    target: f64,
    infeasible: usize,
    metrics: Metrics,
    energy: Option<f64>,
    fixed: Option<f64>,
    total: Option<f64>,
    violated: f64,
    penalty: f64,
    reliability: f64,
    bin_rate: f64,
    bypass: f64,
    trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRecord {
    pub lp_feasibility: f64,
    pub lp_optimality: f64,
    pub lp_pivot: f64,
    pub benders_gap: f64,
    pub benders_max_iterations: usize,
    pub penalty_high: f64,
    pub penalty_low: f64,
    pub penalty_width: f64,
    pub violation_slack: f64,
    pub shortfall_tol: f64,
    pub target_resolution_kg: f64,
}

/// Everything needed to trace an output number back to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub study: Study,
    pub seed: u64,
    pub evaluation_seed: u64,
    pub scenarios: Vec<usize>,
    pub replications: usize,
    pub horizon: usize,
    pub oos_scenarios: usize,
    /// SHA-256 over the spec (without its output path) and the plant document.
    pub config_hash: String,
    pub tolerances: ToleranceRecord,
    pub cells: usize,
    pub failed: Vec<CellFailure>,
    /// SHA-256 of every data file written.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub tables: Vec<Table>,
    pub plots: Vec<Table>,
    pub manifest: Manifest,
}

impl ExperimentReport {
    pub fn complete(&self) -> bool {
        self.manifest.failed.is_empty()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().chain(&self.plots).find(|t| t.name == name)
    }

    /// Write every table as `<name>.csv` and the manifest as `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in self.tables.iter().chain(&self.plots) {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv_string())?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }
}

const TARGET_RESOLUTION_KG: f64 = 0.01;
const DEFAULT_CAPACITIES: [f64; 2] = [2.7, 4.8];
const DEFAULT_SCALES: [f64; 3] = [1.0, 1.25, 1.5];
const DEFAULT_MEDIAN_SHIFTS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
const DEFAULT_SPREAD_SHIFTS: [f64; 4] = [0.0, -1.0, -2.0, -3.0];
const DEFAULT_RELIABILITIES: [f64; 4] = [1.0, 0.99, 0.9, 0.8];

/// Seed of the out-of-sample draws, kept apart from every training seed.
pub fn evaluation_seed(seed: u64) -> u64 {
    seed.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407)
}

fn tolerance_record(params: &BisectionParams, options: &BendersOptions) -> ToleranceRecord {
    let lp: Tolerances<f64> = options.tolerances;
    ToleranceRecord {
        lp_feasibility: lp.feas,
        lp_optimality: lp.opt,
        lp_pivot: lp.pivot,
        benders_gap: options.gap,
        benders_max_iterations: options.max_iterations,
        penalty_high: params.penalty_high,
        penalty_low: params.penalty_low,
        penalty_width: params.width,
        violation_slack: params.slack,
        shortfall_tol: params.shortfall_tol,
        target_resolution_kg: TARGET_RESOLUTION_KG,
    }
}

fn config_hash(spec: &ExperimentSpec, plant: &Plant) -> Result<String> {
    let mut stripped = spec.clone();
    stripped.output = Default::default();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&stripped)?);
    h.update(PlantDocument::from_plant(plant, "plant").to_json()?.as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Shared inputs of every cell in one experiment.
struct Context {
    plant: Plant,
    horizon: usize,
    risk: f64,
    failures: FailureMode,
    spec: ExperimentSpec,
}

impl Context {
    fn moistures(&self) -> Vec<MoistureLevel> {
        self.spec.overrides.moisture.clone().unwrap_or_else(|| MoistureLevel::ALL.to_vec())
    }

    fn capacities(&self) -> Vec<f64> {
        self.spec.overrides.reactor_capacities.clone().unwrap_or_else(|| DEFAULT_CAPACITIES.to_vec())
    }

    /// Plant at the given reactor capacity, keeping the target's share of capacity.
    fn at_capacity(&self, plant: &Plant, capacity_dt_hr: f64) -> Plant {
        let share = self.plant.config.target_rate / self.plant.config.reactor_capacity;
        plant.with_reactor(capacity_dt_hr, share * capacity_dt_hr)
    }

    fn run(&self, plant: Plant, seq: BaleSequence, failures: FailureMode, scenarios: usize) -> Run {
        Run {
            plant,
            seq,
            gen: GenOptions { noise: true, failures },
            risk: self.risk,
            scenarios,
            seed: self.spec.seed,
            search_target: false,
        }
    }

    fn uniform(&self, level: MoistureLevel) -> BaleSequence {
        BaleSequence::uniform(level, self.horizon)
    }

    /// Rows of one study at one sample size; `base` indices are local to the returned list.
    fn rows(&self, scenarios: usize) -> Result<Vec<Row>> {
        let s = scenarios.to_string();
        let mut rows = Vec::new();
        match self.spec.study {
            Study::BaseCase => {
                for level in self.moistures() {
                    for cap in self.capacities() {
                        let run = self.run(self.at_capacity(&self.plant, cap), self.uniform(level), self.failures, scenarios);
                        rows.push(Row { key: vec![s.clone(), level_name(level), num(cap)], runs: vec![run], base: None });
                    }
                }
            }
            Study::ReliabilitySweep => {
                let level = self.moistures()[0];
                let cap = self.capacities()[0];
                let rels = self.spec.overrides.reliabilities.clone().unwrap_or_else(|| DEFAULT_RELIABILITIES.to_vec());
                for rel in rels {
                    let mut run = self.run(self.at_capacity(&self.plant, cap), self.uniform(level), self.failures, scenarios);
                    run.risk = 1.0 - rel;
                    run.search_target = true;
                    rows.push(Row { key: vec![s.clone(), num(100.0 * rel), level_name(level), num(cap)], runs: vec![run], base: None });
                }
            }
            Study::Sequencing => {
                let mix = PerLevel { low: 1.0 / 3.0, medium: 1.0 / 3.0, high: 1.0 / 3.0 };
                for (pattern, name) in [(Pattern::Long, "long"), (Pattern::Short, "short"), (Pattern::Random, "random")] {
                    for cap in self.capacities() {
                        let plant = self.at_capacity(&self.plant, cap);
                        let runs = (0..self.spec.replications)
                            .map(|r| {
                                let seed = replication_seed(self.spec.seed, scenarios, r);
                                let seq = make_bale_sequence(pattern, mix, self.horizon, &mut ChaCha8Rng::seed_from_u64(seed))?;
                                Ok(Run { seed, ..self.run(plant.clone(), seq, self.failures, scenarios) })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        rows.push(Row { key: vec![s.clone(), name.into(), num(cap)], runs, base: None });
                    }
                }
            }
            Study::ShortFailures | Study::LongFailures => {
                let mode = if self.spec.study == Study::ShortFailures { FailureMode::Short } else { FailureMode::Long };
                for level in self.moistures() {
                    for cap in self.capacities() {
                        let plant = self.at_capacity(&self.plant, cap);
                        let base = rows.len();
                        for m in [FailureMode::None, mode] {
                            let run = self.run(plant.clone(), self.uniform(level), m, scenarios);
                            let key = vec![s.clone(), level_name(level), num(cap), mode_name(m).into()];
                            rows.push(Row { key, runs: vec![run], base: (m != FailureMode::None).then_some(base) });
                        }
                    }
                }
            }
            Study::StorageCapacity => {
                let scales = self.spec.overrides.storage_scales.clone().unwrap_or_else(|| DEFAULT_SCALES.to_vec());
                for level in self.moistures() {
                    for cap in self.capacities() {
                        let first = rows.len();
                        let base = first + scales.iter().position(|&x| x == 1.0).expect("validated");
                        for &scale in &scales {
                            let plant = self.at_capacity(&self.plant.with_storage_scale(scale), cap);
                            let run = self.run(plant, self.uniform(level), self.failures, scenarios);
                            let key = vec![s.clone(), level_name(level), num(cap), num(scale)];
                            rows.push(Row { key, runs: vec![run], base: (scale != 1.0).then_some(base) });
                        }
                    }
                }
            }
            Study::ParticleSize => {
                let level = self.moistures()[0];
                let cap = self.capacities()[0];
                let o = &self.spec.overrides;
                let medians = o.median_shifts.clone().unwrap_or_else(|| DEFAULT_MEDIAN_SHIFTS.to_vec());
                let spreads = o.spread_shifts.clone().unwrap_or_else(|| DEFAULT_SPREAD_SHIFTS.to_vec());
                let shifts = std::iter::once(("base", 0.0, 0.0))
                    .chain(medians.iter().filter(|&&m| m != 0.0).map(|&m| ("median", m, 0.0)))
                    .chain(spreads.iter().filter(|&&x| x != 0.0).map(|&x| ("spread", 0.0, x)));
                for (i, (kind, median, spread)) in shifts.enumerate() {
                    let plant = self.at_capacity(&self.plant.with_psd_shift(median, spread), cap);
                    let run = self.run(plant, self.uniform(level), self.failures, scenarios);
                    let key = vec![s.clone(), kind.into(), num(median), num(spread), level_name(level), num(cap)];
                    rows.push(Row { key, runs: vec![run], base: (i > 0).then_some(0) });
                }
            }
            Study::Stability | Study::MvComparison => unreachable!("handled separately"),
        }
        Ok(rows)
    }

    fn key_columns(&self) -> &'static [&'static str] {
        match self.spec.study {
            Study::BaseCase => &["scenarios", "moisture", "reactor_capacity_dt_hr"],
            Study::ReliabilitySweep => &["scenarios", "reliability_pct", "moisture", "reactor_capacity_dt_hr"],
            Study::Sequencing => &["scenarios", "sequence", "reactor_capacity_dt_hr"],
            Study::ShortFailures | Study::LongFailures => &["scenarios", "moisture", "reactor_capacity_dt_hr", "failures"],
            Study::StorageCapacity => &["scenarios", "moisture", "reactor_capacity_dt_hr", "storage_scale"],
            Study::ParticleSize => &["scenarios", "shift", "median_shift_mm", "spread_shift", "moisture", "reactor_capacity_dt_hr"],
            Study::Stability | Study::MvComparison => &[],
        }
    }

    fn has_deltas(&self) -> bool {
        matches!(self.spec.study, Study::ShortFailures | Study::LongFailures | Study::StorageCapacity | Study::ParticleSize)
    }
}

fn level_name(l: MoistureLevel) -> String {
    match l {
        MoistureLevel::Low => "low",
        MoistureLevel::Medium => "medium",
        MoistureLevel::High => "high",
    }
    .into()
}

fn mode_name(m: FailureMode) -> &'static str {
    match m {
        FailureMode::None => "none",
        FailureMode::Short => "short",
        FailureMode::Long => "long",
        FailureMode::Both => "both",
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Feasible => "feasible",
        SolveStatus::TargetUnachievable => "target_unachievable",
    }
}

fn storage_trace(plant: &Plant, trajectories: &[crate::evaluator::Trajectory], horizon: usize) -> Vec<f64> {
    let storage: Vec<usize> = plant.graph.of_kind(EquipmentKind::Storage).map(|n| n.0).collect();
    let count = trajectories.len().max(1) as f64;
    (0..horizon)
        .map(|t| trajectories.iter().map(|tr| storage.iter().map(|&i| tr.inventory[i][t]).sum::<f64>()).sum::<f64>() / count)
        .collect()
}

fn execute(run: &Run, oos: usize, oos_seed: u64, options: BendersOptions) -> Result<RunResult> {
    log::info!("solving {} periods, {} scenarios, seed {}, risk {}", run.seq.len(), run.scenarios, run.seed, run.risk);
    let set = generate_scenario_set(&run.plant, &run.seq, run.scenarios, run.seed, run.gen)?;
    let params = BisectionParams { risk: run.risk, ..Default::default() };
    let mut plant = run.plant.clone();
    if run.search_target {
        plant.config.target_rate = achievable_target(&plant, &run.seq, &set.scenarios, &params, options, TARGET_RESOLUTION_KG)?;
    }
    let res = bisection_search(&plant, &run.seq, &set.scenarios, &params, options)?;
    let trajectories = set
        .scenarios
        .iter()
        .map(|sc| forward_simulate(&plant, &run.seq, &res.first, sc))
        .collect::<Result<Vec<_>>>()?;
    let metrics = compute_metrics(&trajectories, &plant, &run.seq)?;
    let spec = OutOfSample { scenarios: oos, seed: oos_seed, options: run.gen };
    let report = out_of_sample_reliability(&plant, &run.seq, &res.first, &spec)?;
    let horizon = run.seq.len();
    let bypass = set.scenarios.iter().flat_map(|sc| sc.bypass.iter()).sum::<f64>() / (set.len() * horizon).max(1) as f64;
    Ok(RunResult {
        target: plant.config.target_rate,
        status: res.status,
        metrics,
        violated: res.violated,
        penalty: res.penalty,
        oos: report,
        bypass,
        trace: storage_trace(&plant, &trajectories, horizon),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean over runs; a cost is reported only when every run has one.
fn aggregate(results: &[RunResult]) -> RowResult {
    let m = |f: fn(&RunResult) -> f64| mean(results.iter().map(f));
    let cost = |f: fn(&crate::evaluator::CostPerTon) -> f64| -> Option<f64> {
        results.iter().map(|r| r.metrics.cost.map(|c| f(&c))).collect::<Option<Vec<f64>>>().map(|v| mean(v.into_iter()))
    };
    let horizon = results.first().map_or(0, |r| r.trace.len());
    RowResult {
        target: m(|r| r.target),
        infeasible: results.iter().filter(|r| r.status != SolveStatus::Feasible).count(),
        metrics: Metrics {
            reactor_flow: m(|r| r.metrics.reactor_flow),
            utilization: m(|r| r.metrics.utilization),
            cost: None,
            avg_inventory: m(|r| r.metrics.avg_inventory),
            max_inventory: m(|r| r.metrics.max_inventory),
            reliability: m(|r| r.metrics.reliability),
        },
        energy: cost(|c| c.energy),
        fixed: cost(|c| c.fixed),
        total: cost(|c| c.total),
        violated: m(|r| r.violated as f64),
        penalty: m(|r| r.penalty),
        reliability: m(|r| r.oos.reliability),
        bin_rate: m(|r| r.oos.bin_violation_rate()),
        bypass: m(|r| r.bypass),
        trace: (0..horizon).map(|t| mean(results.iter().map(|r| r.trace[t]))).collect(),
    }
}

const VALUE_COLUMNS: [&str; 16] = [
    "status",
    "runs",
    "target_dt_hr",
    "reactor_flow_dt_hr",
    "utilization_pct",
    "energy_cost_usd_dt",
    "fixed_cost_usd_dt",
    "total_cost_usd_dt",
    "avg_inventory_t",
    "max_inventory_t",
    "bypass_pct",
    "in_sample_violations",
    "in_sample_reliability",
    "final_penalty",
    "oos_reliability",
    "oos_bin_violation_pct",
];
const DELTA_COLUMNS: [&str; 3] = ["delta_utilization_pct", "delta_total_cost_pct", "delta_avg_inventory_pct"];

fn cell_study(ctx: &Context, options: BendersOptions, failed: &mut Vec<CellFailure>) -> Result<(Vec<Table>, Vec<Table>, usize)> {
    let mut rows = Vec::new();
    for &s in &ctx.spec.scenarios {
        let offset = rows.len();
        rows.extend(ctx.rows(s)?.into_iter().map(|mut r| {
            r.base = r.base.map(|b| b + offset);
            r
        }));
    }
    let jobs: Vec<(usize, &Run)> = rows.iter().enumerate().flat_map(|(i, r)| r.runs.iter().map(move |run| (i, run))).collect();
    let oos_seed = evaluation_seed(ctx.spec.seed);
    let outcomes: Vec<Result<RunResult>> =
        jobs.par_iter().map(|(_, run)| execute(run, ctx.spec.oos_scenarios, oos_seed, options)).collect();

    let mut grouped: Vec<Vec<RunResult>> = vec![Vec::new(); rows.len()];
    let mut errors: Vec<Option<String>> = vec![None; rows.len()];
    for ((i, _), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(r) => grouped[*i].push(r),
            Err(e) => {
                errors[*i].get_or_insert_with(|| e.to_string());
            }
        }
    }
    let results: Vec<Option<RowResult>> =
        grouped.iter().zip(&errors).map(|(g, e)| if e.is_none() { Some(aggregate(g)) } else { None }).collect();

    let name = ctx.spec.study.name();
    let keys = ctx.key_columns();
    let mut header: Vec<&str> = keys.to_vec();
    header.extend(VALUE_COLUMNS);
    if ctx.has_deltas() {
        header.extend(DELTA_COLUMNS);
    }
    let mut table = Table::new(name, &header);
    let mut trace_header: Vec<&str> = keys.to_vec();
    trace_header.extend(["period", "inventory_t"]);
    let mut traces = Table::new(format!("{name}_inventory"), &trace_header);

    for (i, row) in rows.iter().enumerate() {
        let mut cells = row.key.clone();
        match (&results[i], &errors[i]) {
            (Some(r), _) => {
                let status = if r.infeasible == 0 { "feasible".to_string() } else { format!("{}:{}", status_name(SolveStatus::TargetUnachievable), r.infeasible) };
                let cfg = &row.runs[0].plant.config;
                cells.extend([
                    status,
                    row.runs.len().to_string(),
                    num(cfg.kg_per_period_to_dt_per_hr(r.target)),
                    num(r.metrics.reactor_flow),
                    num(100.0 * r.metrics.utilization),
                    opt(r.energy),
                    opt(r.fixed),
                    opt(r.total),
                    num(r.metrics.avg_inventory),
                    num(r.metrics.max_inventory),
                    num(100.0 * r.bypass),
                    num(r.violated),
                    num(r.metrics.reliability),
                    num(r.penalty),
                    num(r.reliability),
                    num(100.0 * r.bin_rate),
                ]);
                for (t, v) in r.trace.iter().enumerate() {
                    let mut line = row.key.clone();
                    line.extend([t.to_string(), num(v / KG_PER_TON)]);
                    traces.push(line);
                }
            }
            (None, err) => {
                let msg = err.clone().unwrap_or_default();
                failed.push(CellFailure { cell: format!("{name}[{}]", row.key.join(",")), error: msg.clone() });
                cells.push(format!("error: {msg}"));
                cells.push(row.runs.len().to_string());
                cells.extend(std::iter::repeat(String::new()).take(VALUE_COLUMNS.len() - 2));
            }
        }
        if ctx.has_deltas() {
            let base = row.base.and_then(|b| results[b].as_ref());
            let this = results[i].as_ref();
            cells.push(pct_change(this.map(|r| r.metrics.utilization), base.map(|r| r.metrics.utilization)));
            cells.push(pct_change(this.and_then(|r| r.total), base.and_then(|r| r.total)));
            cells.push(pct_change(this.map(|r| r.metrics.avg_inventory), base.map(|r| r.metrics.avg_inventory)));
        }
        table.push(cells);
    }
    let mut plots = vec![traces];
    if ctx.spec.study == Study::ReliabilitySweep {
        plots.push(frontier(&table));
    }
    Ok((vec![table], plots, rows.len()))
}

/// (reliability, target, cost) pairs of a sweep, in the order solved.
fn frontier(table: &Table) -> Table {
    let mut out = Table::new("reliability_sweep_frontier", &["scenarios", "reliability_pct", "target_dt_hr", "total_cost_usd_dt"]);
    for row in &table.rows {
        let get = |c: &str| table.column(c).map(|j| row[j].clone()).unwrap_or_default();
        out.push(vec![get("scenarios"), get("reliability_pct"), get("target_dt_hr"), get("total_cost_usd_dt")]);
    }
    out
}

fn stability_study(ctx: &Context, options: BendersOptions, failed: &mut Vec<CellFailure>) -> (Vec<Table>, Vec<Table>, usize) {
    let level = ctx.moistures()[0];
    let seq = ctx.uniform(level);
    let params = BisectionParams { risk: ctx.risk, ..Default::default() };
    let gen = GenOptions { noise: true, failures: ctx.failures };
    let mut summary = Table::new("stability", &["scenarios", "replications", "status", "min_objective", "max_objective", "spread_pct"]);
    let mut reps = Table::new("stability_replications", &["scenarios", "replication", "seed", "objective"]);
    let rows: Vec<_> = ctx
        .spec
        .scenarios
        .par_iter()
        .map(|&s| (s, stability_test(&ctx.plant, &seq, &[s], ctx.spec.replications, ctx.spec.seed, gen, &params, options)))
        .collect();
    for (s, res) in rows {
        match res {
            Ok(rows) => {
                let row = &rows[0];
                let lo = row.objectives.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                summary.push(vec![s.to_string(), row.objectives.len().to_string(), "ok".into(), num(lo), num(hi), num(100.0 * row.spread)]);
                for (r, (seed, obj)) in row.seeds.iter().zip(&row.objectives).enumerate() {
                    reps.push(vec![s.to_string(), r.to_string(), seed.to_string(), num(*obj)]);
                }
            }
            Err(e) => {
                failed.push(CellFailure { cell: format!("stability[{s}]"), error: e.to_string() });
                summary.push(vec![s.to_string(), ctx.spec.replications.to_string(), format!("error: {e}"), String::new(), String::new(), String::new()]);
            }
        }
    }
    let cells = ctx.spec.scenarios.len();
    (vec![summary], vec![reps], cells)
}

/// First stage of the single-scenario model with every random input at its mean.
pub fn mean_value_first_stage(plant: &Plant, seq: &BaleSequence) -> Result<FirstStage> {
    let ef = build_mean_value(plant, seq)?;
    let sol = solve_lp(&ef.model, &Tolerances::default());
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("mean-value model ended {:?}", sol.status)));
    }
    ef.first_stage(&sol.x)
}

fn mv_study(ctx: &Context, options: BendersOptions, failed: &mut Vec<CellFailure>) -> (Vec<Table>, Vec<Table>, usize) {
    let level = ctx.moistures()[0];
    let seq = ctx.uniform(level);
    let gen = GenOptions { noise: true, failures: ctx.failures };
    let oos = OutOfSample { scenarios: ctx.spec.oos_scenarios, seed: evaluation_seed(ctx.spec.seed), options: gen };
    let params = BisectionParams { risk: ctx.risk, ..Default::default() };
    let plant = &ctx.plant;
    let mut cells: Vec<(String, String)> = vec![("0".into(), "mean_value".into())];
    cells.extend(ctx.spec.scenarios.iter().map(|s| (s.to_string(), "saa".into())));
    let outcomes: Vec<Result<(FirstStage, Option<usize>, ReliabilityReport)>> = cells
        .par_iter()
        .map(|(s, model)| {
            let (first, violated) = if model == "mean_value" {
                (mean_value_first_stage(plant, &seq)?, None)
            } else {
                let count: usize = s.parse().expect("sample size");
                let set = generate_scenario_set(plant, &seq, count, ctx.spec.seed, gen)?;
                let res = bisection_search(plant, &seq, &set.scenarios, &params, options)?;
                (res.first, Some(res.violated))
            };
            let report = out_of_sample_reliability(plant, &seq, &first, &oos)?;
            Ok((first, violated, report))
        })
        .collect();
    let mut table = Table::new(
        "mv_comparison",
        &[
            "scenarios",
            "model",
            "status",
            "in_sample_risk",
            "initial_inventory_kg",
            "in_sample_violations",
            "oos_reliability",
            "oos_mean_feed_dt_hr",
            "oos_bin_violation_pct",
        ],
    );
    let mut events = Table::new("mv_comparison_events", &["scenarios", "model", "node", "kind", "scenarios_hit", "events", "magnitude_kg"]);
    for ((s, model), out) in cells.iter().zip(outcomes) {
        match out {
            Ok((first, violated, report)) => {
                let risk = if model == "saa" { num(ctx.risk) } else { String::new() };
                table.push(vec![
                    s.clone(),
                    model.clone(),
                    "ok".into(),
                    risk,
                    num(first.initial_inventory.iter().sum()),
                    violated.map_or_else(String::new, |v| v.to_string()),
                    num(report.reliability),
                    num(plant.config.kg_per_period_to_dt_per_hr(report.mean_feed)),
                    num(100.0 * report.bin_violation_rate()),
                ]);
                for ((node, kind), t) in &report.by_node {
                    let kind = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    events.push(vec![
                        s.clone(),
                        model.clone(),
                        plant.graph.node(*node).id.clone(),
                        kind,
                        t.scenarios.to_string(),
                        t.events.to_string(),
                        num(t.magnitude),
                    ]);
                }
            }
            Err(e) => {
                failed.push(CellFailure { cell: format!("mv_comparison[{s},{model}]"), error: e.to_string() });
                let mut row = vec![s.clone(), model.clone(), format!("error: {e}")];
                row.extend(std::iter::repeat(String::new()).take(6));
                table.push(row);
            }
        }
    }
    let count = cells.len();
    (vec![table], vec![events], count)
}

/// Run every cell of the study. Cell failures are recorded, not raised.
pub fn compute_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let plant = spec.load_plant()?;
    let horizon = spec.horizon.unwrap_or(plant.config.horizon);
    let default_failures = if spec.study == Study::MvComparison { FailureMode::Both } else { FailureMode::None };
    let ctx = Context {
        horizon,
        risk: spec.saa_risk.unwrap_or(plant.config.saa_risk),
        failures: spec.failures.unwrap_or(default_failures),
        spec: spec.clone(),
        plant,
    };
    if ctx.moistures().is_empty() || ctx.capacities().is_empty() {
        return Err(spec_error("overrides", "empty grid"));
    }
    let options = BendersOptions::default();
    let params = BisectionParams::default();
    let mut failed = Vec::new();
    let (tables, plots, cells) = match spec.study {
        Study::Stability => stability_study(&ctx, options, &mut failed),
        Study::MvComparison => mv_study(&ctx, options, &mut failed),
        _ => cell_study(&ctx, options, &mut failed)?,
    };
    let files = tables
        .iter()
        .chain(&plots)
        .map(|t| (format!("{}.csv", t.name), hex::encode(Sha256::digest(t.to_csv_string().as_bytes()))))
        .collect();
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        study: spec.study,
        seed: spec.seed,
        evaluation_seed: evaluation_seed(spec.seed),
        scenarios: spec.scenarios.clone(),
        replications: spec.replications,
        horizon,
        oos_scenarios: spec.oos_scenarios,
        config_hash: config_hash(spec, &ctx.plant)?,
        tolerances: tolerance_record(&params, &options),
        cells,
        failed,
        files,
    };
    Ok(ExperimentReport { tables, plots, manifest })
}

/// Compute the study and write its CSVs and manifest under `spec.output`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let report = compute_experiment(spec)?;
    report.write(&spec.output)?;
    Ok(report)
}
