//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feedline::evaluator::{
    compute_metrics, cost_per_ton, forward_simulate, out_of_sample_reliability, stability_test, utilization, OutOfSample,
    Trajectory,
};
use feedline::harness::{mean_value_first_stage, run_experiment, ExperimentSpec, Study};
use feedline::lp::{solve_lp, Status, Tolerances};
use feedline::optimizer::toy::random_toy;
use feedline::optimizer::{
    achievable_target, bisection_search, build_extensive_form, build_subproblem, scenario_block, BendersOptions, BendersSolver,
    BisectionParams, BlockParams, FirstStage, Layout, SolveResult, SolveStatus,
};
use feedline::plant::{pdu_plant, MoistureLevel, NodeId, Plant, KG_PER_TON};
use feedline::scenario::{
    bypass_ratio, density_regression, generate_scenario_set, sample_scenario, BaleSequence, FailureMode, GenOptions, Psd, Scenario,
};

fn verdict(criterion: u32, ok: bool, detail: String) {
    println!("criterion {criterion}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

const DESK_HORIZON: usize = 120;
const DESK_SCENARIOS: usize = 100;
const DESK_SEED: u64 = 1;
const FRESH_SEED: u64 = 20_000;
const WITH_FAILURES: GenOptions = GenOptions { noise: true, failures: FailureMode::Both };

struct Desk {
    plant: Plant,
    seq: BaleSequence,
    scenarios: Vec<Scenario>,
    params: BisectionParams,
    result: SolveResult,
}

/// PDU plant, low-moisture bales, failures on, solved once and shared.
fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let plant = pdu_plant();
        let seq = BaleSequence::uniform(MoistureLevel::Low, DESK_HORIZON);
        let scenarios = generate_scenario_set(&plant, &seq, DESK_SCENARIOS, DESK_SEED, WITH_FAILURES).unwrap().scenarios;
        let params = BisectionParams { risk: 0.1, ..Default::default() };
        let result = bisection_search(&plant, &seq, &scenarios, &params, BendersOptions::default()).unwrap();
        Desk { plant, seq, scenarios, params, result }
    })
}

fn grinder_density(plant: &Plant, name: &str, moisture: f64, median: f64) -> f64 {
    let model = plant.graph.node(plant.graph.find(name).unwrap()).density_model.unwrap();
    let psd = Psd { p10: median / 2.0, p50: median, p90: median * 2.0 };
    density_regression(&model, moisture, &psd, 0.0).unwrap()
}

#[test]
fn criterion_01_regression_exactness() {
    let plant = pdu_plant();
    let g1 = grinder_density(&plant, "Grinder 1", 0.10, 2.0);
    let g2 = grinder_density(&plant, "Grinder 2", 0.10, 0.65);
    // Hand evaluation of the deterministic parts.
    let g1_hand = 56.183 + 65.312 * 0.10 - 8.473 * 2.0;
    let g2_hand = 186.348 + 206.1697 * 0.10 - 110.302 * 0.65;
    let exact = (g1 - g1_hand).abs() <= 1e-9 && (g2 - g2_hand).abs() <= 1e-9;
    let printed = (g1 - 45.7682).abs() <= 1e-9 && (g2 * 1e4).round() / 1e4 == 135.2687;
    verdict(1, exact && printed, format!("grinder 1 {g1:.10}, grinder 2 {g2:.10}"));
}

#[test]
fn criterion_02_bypass_ratio_exactness() {
    let cases = [
        (Psd { p10: 3.0, p50: 6.35, p90: 9.0 }, 0.5f64),
        (Psd { p10: 0.5, p50: 2.0, p90: 12.0 }, 0.5 + 0.4 * (6.35 - 2.0) / (12.0 - 2.0)),
        (Psd { p10: 4.0, p50: 8.0, p90: 16.0 }, 0.5 - 0.4 * (8.0 - 6.35) / (8.0 - 4.0)),
        (Psd { p10: 8.0, p50: 10.0, p90: 20.0 }, 0.0),
        (Psd { p10: 0.1, p50: 0.2, p90: 0.3 }, 1.0),
    ];
    let worst = cases.iter().map(|(psd, want)| (bypass_ratio(psd, 6.35).unwrap() - want).abs()).fold(0.0, f64::max);
    verdict(2, worst <= 1e-12, format!("max deviation {worst:.3e} over {} cases", cases.len()));
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[test]
fn criterion_03_oracle_equivalence() {
    let tol = Tolerances::default();
    let (mut worst_obj, mut worst_block) = (0.0f64, 0.0f64);
    let mut instances = 0;
    for seed in 0..20u64 {
        let horizon = 4 + (seed as usize % 9);
        let count = 1 + (seed as usize % 5);
        let toy = random_toy(500 + seed, horizon, count);
        assert!(toy.plant.graph.len() <= 5 && horizon <= 12 && count <= 5);
        let mut solver = BendersSolver::new(&toy.plant, &toy.sequence, &toy.scenarios, BendersOptions::default()).unwrap();
        for penalty in [1e4, 2.0] {
            let ef = build_extensive_form(&toy.plant, &toy.sequence, &toy.scenarios, penalty).unwrap();
            let sol = solve_lp(&ef.model, &tol);
            assert_eq!(sol.status, Status::Optimal);
            worst_obj = worst_obj.max(rel(solver.solve(penalty).unwrap().objective, sol.objective));

            let z = &sol.x[..ef.layout.first_len()];
            let params = BlockParams { penalty, weight: 1.0 / count as f64, hard_target: false };
            let mut total: f64 = ef.model.cols[..z.len()].iter().zip(z).map(|(c, v)| c.cost * v).sum();
            for sc in &toy.scenarios {
                let block = scenario_block(&toy.plant, &ef.layout, &toy.sequence, sc, params, "").unwrap();
                let sub = solve_lp(&build_subproblem(&block, z), &tol);
                assert_eq!(sub.status, Status::Optimal);
                total += sub.objective;
            }
            worst_block = worst_block.max(rel(total, sol.objective));
        }
        instances += 1;
    }
    verdict(
        3,
        worst_obj <= 1e-6 && worst_block <= 1e-8,
        format!("{instances} toys, objective gap {worst_obj:.2e}, block gap {worst_block:.2e}"),
    );
}

#[test]
fn criterion_04_bisection_contract() {
    let d = desk();
    let bound = d.params.threshold(DESK_SCENARIOS);
    let within = d.result.status == SolveStatus::Feasible && d.result.violated as f64 <= bound;

    let mut over = d.plant.clone();
    over.config.target_rate = 1.05 * d.plant.config.reactor_capacity;
    let res = bisection_search(&over, &d.seq, &d.scenarios, &d.params, BendersOptions::default()).unwrap();
    let detected = res.status == SolveStatus::TargetUnachievable;
    verdict(
        4,
        within && detected,
        format!("C = {} <= {bound}, final penalty {:.4e}, above-limit target flagged: {detected}", d.result.violated, d.result.penalty),
    );
}

#[test]
fn criterion_05_out_of_sample_reliability() {
    let d = desk();
    let spec = OutOfSample { scenarios: 10_000, seed: FRESH_SEED, options: WITH_FAILURES };
    let rep = out_of_sample_reliability(&d.plant, &d.seq, &d.result.first, &spec).unwrap();
    verdict(5, rep.reliability >= 0.85, format!("reliability {:.4} over {} fresh scenarios", rep.reliability, rep.scenarios));
}

#[test]
fn criterion_06_reliability_cost_trend() {
    let d = desk();
    let mut rows = Vec::new();
    for reliability in [1.0, 0.99, 0.9, 0.8] {
        let params = BisectionParams { risk: 1.0 - reliability, ..Default::default() };
        let target = achievable_target(&d.plant, &d.seq, &d.scenarios, &params, BendersOptions::default(), 0.01).unwrap();
        let cost = cost_per_ton(&d.plant, &d.seq, target * d.seq.len() as f64 / KG_PER_TON).map_or(f64::INFINITY, |c| c.total);
        rows.push((reliability, target, cost));
    }
    let tol = 1e-9;
    let ok = rows.windows(2).all(|w| w[1].1 >= w[0].1 - tol && w[1].2 <= w[0].2 + tol);
    let text: Vec<String> = rows
        .iter()
        .map(|(r, t, c)| format!("{:.0}%: {:.4} dt/hr at {c:.3} $/dt", 100.0 * r, d.plant.config.kg_per_period_to_dt_per_hr(*t)))
        .collect();
    verdict(6, ok, text.join("; "));
}

fn dry_feed_trajectory(plant: &Plant, seq: &BaleSequence, dt_per_hr: f64) -> Trajectory {
    let n = plant.graph.len();
    let horizon = seq.len();
    Trajectory {
        flow: vec![vec![0.0; horizon]; n],
        inflow: vec![vec![0.0; horizon]; n],
        inventory: vec![vec![0.0; horizon]; n],
        process_loss: vec![vec![0.0; horizon]; n],
        spill: vec![vec![0.0; horizon]; n],
        reactor_dry: vec![plant.config.dt_per_hr_to_kg_per_period(dt_per_hr); horizon],
        events: Vec::new(),
        opening: vec![0.0; n],
    }
}

#[test]
fn criterion_07_utilization_arithmetic() {
    let seq = BaleSequence::uniform(MoistureLevel::Low, 30);
    let mut got = Vec::new();
    for (flow, capacity, want) in [(2.25, 2.7, 83.0), (3.85, 4.8, 80.0)] {
        let plant = pdu_plant().with_reactor(capacity, flow);
        let m = compute_metrics(&[dry_feed_trajectory(&plant, &seq, flow)], &plant, &seq).unwrap();
        let direct = (100.0 * utilization(flow, capacity)).round();
        got.push(((100.0 * m.utilization).round(), direct, want));
    }
    let ok = got.iter().all(|(m, d, w)| m == w && d == w);
    verdict(7, ok, format!("{got:?}"));
}

#[test]
fn criterion_08_mean_value_versus_saa() {
    let d = desk();
    let spec = OutOfSample { scenarios: 10_000, seed: FRESH_SEED + 1, options: WITH_FAILURES };
    let mv = mean_value_first_stage(&d.plant, &d.seq).unwrap();
    let mv_rate = out_of_sample_reliability(&d.plant, &d.seq, &mv, &spec).unwrap().bin_violation_rate();

    let count = 500;
    let scenarios = generate_scenario_set(&d.plant, &d.seq, count, DESK_SEED, WITH_FAILURES).unwrap().scenarios;
    let params = BisectionParams { risk: 0.05, ..Default::default() };
    let saa = bisection_search(&d.plant, &d.seq, &scenarios, &params, BendersOptions::default()).unwrap();
    let saa_rate = out_of_sample_reliability(&d.plant, &d.seq, &saa.first, &spec).unwrap().bin_violation_rate();
    verdict(
        8,
        mv_rate > 0.5 && saa_rate <= 0.15,
        format!("bin violations: mean-value {:.1}%, SAA (S={count}, risk 0.05) {:.1}%", 100.0 * mv_rate, 100.0 * saa_rate),
    );
}

#[test]
fn criterion_09_mass_conservation() {
    let plant = pdu_plant();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for k in 0..1000u64 {
        let horizon = rng.gen_range(5..40);
        let levels = (0..horizon).map(|_| MoistureLevel::ALL[rng.gen_range(0..3)]).collect();
        let seq = BaleSequence { levels, ..BaleSequence::uniform(MoistureLevel::Low, horizon) };
        let failures = [FailureMode::None, FailureMode::Short, FailureMode::Long, FailureMode::Both][k as usize % 4];
        let sc = sample_scenario(&plant, &seq, 77, k, GenOptions { noise: true, failures }).unwrap();
        let layout = Layout::new(&plant, horizon);
        let mut first = FirstStage::zeros(&layout);
        for (i, row) in first.speed.iter_mut().enumerate() {
            let node = plant.graph.node(NodeId(i));
            if node.kind.has_speed() {
                for (t, v) in row.iter_mut().enumerate() {
                    *v = node.speed_bound[seq.levels[t]] * rng.gen_range(0.0..1.2);
                }
            }
        }
        for (s, v) in layout.storage.iter().zip(first.initial_inventory.iter_mut()) {
            *v = plant.graph.node(*s).volume_cap_m3 * rng.gen_range(0.0..300.0);
        }
        let tr = forward_simulate(&plant, &seq, &first, &sc).unwrap();
        for i in 0..plant.graph.len() {
            for t in 0..horizon {
                let prev = if t == 0 { tr.opening[i] } else { tr.inventory[i][t - 1] };
                let scale = 1.0 + tr.inflow[i][t].abs() + tr.flow[i][t].abs() + tr.inventory[i][t].abs() + prev.abs();
                worst = worst.max(tr.imbalance(i, t).abs() / scale);
            }
        }
    }
    verdict(9, worst <= 1e-9, format!("worst relative imbalance {worst:.3e} over 1000 trajectories"));
}

#[test]
fn criterion_10_stability() {
    let d = desk();
    let rows = stability_test(&d.plant, &d.seq, &[DESK_SCENARIOS], 10, DESK_SEED, WITH_FAILURES, &d.params, BendersOptions::default())
        .unwrap();
    let row = &rows[0];
    verdict(
        10,
        row.objectives.len() == 10 && row.spread <= 0.05,
        format!("S={} spread {:.4}% over {} replications", row.scenarios, 100.0 * row.spread, row.objectives.len()),
    );
}

fn csv_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_11_determinism() {
    let root = tempfile::tempdir().unwrap();
    let mut same = true;
    let mut compared = 0;
    for study in [Study::ShortFailures, Study::ReliabilitySweep, Study::MvComparison] {
        let mut spec = ExperimentSpec::new(study, vec![4], 31, root.path().join("unused"));
        spec.horizon = Some(24);
        spec.oos_scenarios = 300;
        spec.overrides.moisture = Some(vec![MoistureLevel::Medium]);
        spec.overrides.reactor_capacities = Some(vec![2.7]);
        let mut outputs = Vec::new();
        for (label, threads) in [("a", 0), ("b", 0), ("single", 1)] {
            spec.output = root.path().join(format!("{}-{label}", study.name()));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let report = pool.install(|| run_experiment(&spec)).unwrap();
            assert!(report.complete(), "{:?}", report.manifest.failed);
            outputs.push(csv_files(&spec.output));
        }
        same &= outputs[0] == outputs[1] && outputs[0] == outputs[2] && !outputs[0].is_empty();
        compared += outputs[0].len();
    }
    verdict(11, same, format!("{compared} CSV files identical across two runs and one thread versus the default pool"));
}
