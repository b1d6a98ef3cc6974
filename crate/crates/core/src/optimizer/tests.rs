use super::toy::{random_toy, ToyInstance};
use super::*;
use crate::lp::{solve_lp, Status, Tolerances};
use crate::plant::{pdu_plant, EquipmentKind, MoistureLevel, NodeId};
use crate::scenario::BaleSequence;

fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn solve_ef(toy: &ToyInstance, penalty: f64) -> (ExtensiveForm, crate::lp::LpSolution<f64>) {
    let ef = build_extensive_form(&toy.plant, &toy.sequence, &toy.scenarios, penalty).unwrap();
    let sol = solve_lp(&ef.model, &tol());
    assert_eq!(sol.status, Status::Optimal);
    (ef, sol)
}

/// Toy whose bin may be emptied completely.
fn floorless_toy(seed: u64, horizon: usize, count: usize) -> ToyInstance {
    let mut toy = random_toy(seed, horizon, count);
    let bin = toy.plant.graph.storage().unwrap();
    toy.plant.graph.nodes[bin.0].volume_floor_m3 = 0.0;
    toy
}

#[test]
fn column_count_follows_construction() {
    let toy = random_toy(3, 2, 1);
    let ef = build_extensive_form(&toy.plant, &toy.sequence, &toy.scenarios, 1.0).unwrap();
    // 5 nodes x 2 periods of speeds + one starting stock; per scenario 10 flows,
    // 2 bin levels and the shortfall and surplus slacks.
    assert_eq!(ef.model.num_cols(), 10 + 1 + 10 + 2 + 2);
    let three = random_toy(3, 2, 3);
    let ef = build_extensive_form(&three.plant, &three.sequence, &three.scenarios, 1.0).unwrap();
    assert_eq!(ef.model.num_cols(), 11 + 3 * 14);
}

#[test]
fn empty_scenario_set_is_rejected() {
    let toy = random_toy(0, 4, 1);
    assert!(build_extensive_form(&toy.plant, &toy.sequence, &[], 1.0).is_err());
    assert!(BendersSolver::new(&toy.plant, &toy.sequence, &[], BendersOptions::default()).is_err());
}

#[test]
fn horizon_mismatch_is_rejected() {
    let toy = random_toy(0, 4, 2);
    let short = BaleSequence::uniform(MoistureLevel::Low, 3);
    assert!(build_extensive_form(&toy.plant, &short, &toy.scenarios, 1.0).is_err());
}

#[test]
fn zero_split_sends_nothing_down_the_bypass() {
    let mut toy = random_toy(11, 6, 3);
    for sc in &mut toy.scenarios {
        sc.bypass.iter_mut().for_each(|b| *b = 0.0);
    }
    let (ef, sol) = solve_ef(&toy, 100.0);
    let g = &toy.plant.graph;
    for s in 0..toy.scenarios.len() {
        let x = ef.block_values(&sol.x, s);
        let mut secondary = 0.0;
        for t in 0..6 {
            assert!(x[ef.layout.flow(g.bypass_head, t)].abs() < 1e-9);
            secondary += x[ef.layout.flow(g.secondary_head, t)];
        }
        assert!(secondary > 0.0);
    }
}

#[test]
fn stopped_infeed_leaves_only_the_starting_stock() {
    let mut toy = random_toy(5, 8, 2);
    for sc in &mut toy.scenarios {
        sc.operating[0].iter_mut().for_each(|o| *o = false);
    }
    let (ef, sol) = solve_ef(&toy, 50.0);
    let g = &toy.plant.graph;
    let bin = g.storage().unwrap();
    let i0 = sol.x[ef.layout.initial(0)];
    for s in 0..toy.scenarios.len() {
        let x = ef.block_values(&sol.x, s);
        for t in 0..8 {
            for n in [g.source, g.separation_feed, g.secondary_head, g.bypass_head] {
                assert!(x[ef.layout.flow(n, t)].abs() < 1e-9);
            }
        }
        // Everything discharged came out of the opening stock.
        let discharged: f64 = (0..8).map(|t| x[ef.layout.flow(bin, t)]).sum();
        let closing = x[ef.layout.held(0, 7)];
        assert!(rel(discharged + closing, i0) < 1e-9);
        let floor = toy.plant.graph.node(bin).volume_floor_m3 * toy.scenarios[s].density[bin.0][7];
        assert!(closing >= floor - 1e-9);
    }
}

#[test]
fn scenario_blocks_sum_to_the_extensive_form() {
    for seed in 0..8 {
        let toy = random_toy(seed, 6, 3);
        for penalty in [0.0, 3.0, 1e3] {
            let (ef, sol) = solve_ef(&toy, penalty);
            let z = &sol.x[..ef.layout.first_len()];
            let first: f64 = ef.model.cols[..z.len()].iter().zip(z).map(|(c, v)| c.cost * v).sum();
            let params = BlockParams { penalty, weight: 1.0 / 3.0, hard_target: false };
            let mut total = first;
            for (s, sc) in toy.scenarios.iter().enumerate() {
                let block = scenario_block(&toy.plant, &ef.layout, &toy.sequence, sc, params, "").unwrap();
                let sub = solve_lp(&build_subproblem(&block, z), &tol());
                assert_eq!(sub.status, Status::Optimal, "seed {seed} scenario {s}");
                total += sub.objective;
            }
            assert!(rel(total, sol.objective) < 1e-8, "seed {seed}: {total} vs {}", sol.objective);
        }
    }
}

#[test]
fn no_speed_and_no_stock_means_full_shortfall() {
    let toy = floorless_toy(2, 5, 2);
    let layout = Layout::new(&toy.plant, 5);
    let z = vec![0.0; layout.first_len()];
    let params = BlockParams { penalty: 10.0, weight: 0.5, hard_target: false };
    for sc in &toy.scenarios {
        let block = scenario_block(&toy.plant, &layout, &toy.sequence, sc, params, "").unwrap();
        let sol = solve_lp(&build_subproblem(&block, &z), &tol());
        assert_eq!(sol.status, Status::Optimal);
        assert!(sol.x[..layout.shortfall()].iter().all(|v| v.abs() < 1e-9));
        assert!(rel(sol.x[layout.shortfall()], toy.plant.config.target_rate) < 1e-12);
        let rec = Recourse::analyse(&block, &[layout.shortfall(), layout.surplus()]).unwrap();
        assert!(rec.evaluate(&block, &z).iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn decomposition_matches_extensive_form() {
    let mut checked = 0;
    for seed in 0..20 {
        let toy = random_toy(100 + seed, 4 + (seed as usize % 9), 1 + (seed as usize % 5));
        let mut solver = BendersSolver::new(&toy.plant, &toy.sequence, &toy.scenarios, BendersOptions::default()).unwrap();
        for penalty in [1e4, 5.0, 0.0] {
            let (_, sol) = solve_ef(&toy, penalty);
            let out = solver.solve(penalty).unwrap();
            assert!(rel(out.objective, sol.objective) < 1e-6, "seed {seed} penalty {penalty}: {} vs {}", out.objective, sol.objective);
            // Bounds hold the optimum between them at every logged iteration.
            let slack = 1e-7 * (1.0 + sol.objective.abs());
            for w in out.log.windows(2) {
                assert!(w[1].lower >= w[0].lower - 1e-12);
                assert!(w[1].upper <= w[0].upper);
            }
            for r in &out.log {
                assert!(r.lower <= sol.objective + slack);
                assert!(r.upper >= sol.objective - slack);
            }
            let first = FirstStage::from_vec(solver.layout(), &out.first).unwrap();
            check_first_stage_bounds(&toy, &first);
            checked += 1;
        }
    }
    assert_eq!(checked, 60);
}

fn check_first_stage_bounds(toy: &ToyInstance, first: &FirstStage) {
    let g = &toy.plant.graph;
    for (i, row) in first.speed.iter().enumerate() {
        let node = g.node(NodeId(i));
        for (t, &v) in row.iter().enumerate() {
            let cap = if node.kind.has_speed() { node.speed_bound[toy.sequence.levels[t]] } else { 0.0 };
            assert!((0.0..=cap).contains(&v), "speed {v} outside [0, {cap}]");
        }
    }
    let bin = g.storage().unwrap();
    let dmax = toy.scenarios.iter().map(|s| s.density[bin.0][0]).fold(0.0, f64::max);
    let i0 = first.initial_inventory[0];
    assert!(i0 >= 0.0 && i0 <= g.node(bin).volume_cap_m3 * dmax * (1.0 + 1e-12));
}

#[test]
fn single_scenario_decomposition_is_exact() {
    for seed in 0..5 {
        let toy = random_toy(seed, 8, 1);
        let (_, sol) = solve_ef(&toy, 20.0);
        let out = BendersSolver::new(&toy.plant, &toy.sequence, &toy.scenarios, BendersOptions::default())
            .unwrap()
            .solve(20.0)
            .unwrap();
        assert!(rel(out.objective, sol.objective) < 1e-9);
    }
}

fn violations(ef: &ExtensiveForm, x: &[f64], count: usize) -> usize {
    (0..count).filter(|&s| ef.block_values(x, s)[ef.layout.shortfall()] > 1e-6).count()
}

#[test]
fn violations_never_grow_with_the_penalty() {
    let mut informative = 0;
    for seed in 0..10 {
        let mut toy = random_toy(200 + seed, 8, 5);
        // Opening stock dearer than the feed it supplies, so only the penalty buys it.
        toy.plant.config.holding_cost_per_kg = 1.5;
        toy.plant.config.holding_weight = 1.0;
        // Aim between the worst and best delivery of the unpenalised plan.
        let (ef, sol) = solve_ef(&toy, 0.0);
        let r = toy.plant.config.target_rate;
        let levels: Vec<f64> = (0..5)
            .map(|s| {
                let x = ef.block_values(&sol.x, s);
                r - x[ef.layout.shortfall()] + x[ef.layout.surplus()]
            })
            .collect();
        let (lo, hi) = levels.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        toy.plant.config.target_rate = 0.5 * (lo + hi);
        let mut last = usize::MAX;
        let mut seen = std::collections::BTreeSet::new();
        for penalty in [0.0, 0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1e4] {
            let (ef, sol) = solve_ef(&toy, penalty);
            let c = violations(&ef, &sol.x, 5);
            assert!(c <= last, "seed {seed}: {c} violations at {penalty} after {last}");
            last = c;
            seen.insert(c);
        }
        if seen.len() > 1 {
            informative += 1;
        }
    }
    assert!(informative >= 5);
}

#[test]
fn zero_target_is_met_at_the_first_solve() {
    let mut toy = random_toy(7, 6, 4);
    toy.plant.config.target_rate = 0.0;
    let res = bisection_search(&toy.plant, &toy.sequence, &toy.scenarios, &BisectionParams::default(), BendersOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Feasible);
    assert_eq!(res.violated, 0);
    assert_eq!(res.steps[0].violated, 0);
    assert_eq!(res.satisfied(), 4);
}

#[test]
fn target_above_reactor_limit_is_unachievable() {
    let mut toy = random_toy(8, 6, 4);
    toy.plant.config.target_rate = toy.plant.config.reactor_capacity * 1.01;
    let res = bisection_search(&toy.plant, &toy.sequence, &toy.scenarios, &BisectionParams::default(), BendersOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::TargetUnachievable);
    assert_eq!(res.steps.len(), 1);
    assert_eq!(res.violated, 4);
}

#[test]
fn bisection_respects_the_violation_threshold() {
    for seed in 0..4 {
        let mut toy = random_toy(300 + seed, 8, 10);
        toy.plant.config.target_rate = toy.plant.config.reactor_capacity * 0.8;
        let params = BisectionParams { risk: 0.2, ..Default::default() };
        let res = bisection_search(&toy.plant, &toy.sequence, &toy.scenarios, &params, BendersOptions::default()).unwrap();
        if res.status == SolveStatus::Feasible {
            assert!((res.violated as f64) < params.threshold(10));
            let shortfalls = (0..10).filter(|&s| res.shortfall(s) > params.shortfall_tol).count();
            assert_eq!(shortfalls, res.violated);
            // Every step after the first halves the bracket, so about log2(high / width) of them run.
            assert!(res.steps.len() <= 1 + ((params.penalty_high - params.penalty_low) / params.width).log2().ceil() as usize);
        }
    }
}

#[test]
fn achievable_target_grows_with_allowed_risk() {
    let toy = random_toy(21, 8, 10);
    let mut last = 0.0;
    for risk in [0.0, 0.1, 0.3] {
        let params = BisectionParams { risk, ..Default::default() };
        let r = achievable_target(&toy.plant, &toy.sequence, &toy.scenarios, &params, BendersOptions::default(), 1e-3).unwrap();
        assert!(r >= last - 1e-12);
        assert!(r <= toy.plant.config.reactor_capacity);
        last = r;
    }
}

#[test]
fn mean_value_model_solves_on_the_canonical_plant() {
    let plant = pdu_plant();
    let seq = BaleSequence::uniform(MoistureLevel::Low, 30);
    let mv = build_mean_value(&plant, &seq).unwrap();
    let sol = solve_lp(&mv.model, &tol());
    assert_eq!(sol.status, Status::Optimal);
    // The target is a hard row: no shortfall column is left open.
    assert_eq!(mv.block_values(&sol.x, 0)[mv.layout.shortfall()], 0.0);
    let speeds = mv.first_stage(&sol.x).unwrap();
    let feeds = plant.graph.of_kind(EquipmentKind::BaleInfeed).count();
    assert!(feeds > 0 && speeds.speed.iter().flatten().any(|&v| v > 0.0));
}

#[test]
fn threshold_snaps_to_whole_counts() {
    let params = BisectionParams { risk: 0.2, ..Default::default() };
    assert_eq!(params.threshold(100), 21.0);
    let params = BisectionParams { risk: 0.07, ..Default::default() };
    assert_eq!(params.threshold(100), 8.0);
    let params = BisectionParams { risk: 0.1, slack: 0.0, ..Default::default() };
    assert!((params.threshold(7) - 0.7).abs() < 1e-12);
}
