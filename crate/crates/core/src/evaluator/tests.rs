use super::*;
use crate::lp::{solve_lp, Status, Tolerances};
use crate::optimizer::toy::random_toy;
use crate::optimizer::{build_extensive_form, FirstStage, Layout};
use crate::plant::{pdu_plant, MoistureLevel, NodeId, Plant, KG_PER_TON};
use crate::scenario::{generate_scenario_set, BaleSequence, FailureMode, GenOptions, Scenario};

fn full_speed(plant: &Plant, seq: &BaleSequence, stock: f64) -> FirstStage {
    let layout = Layout::new(plant, seq.len());
    let mut first = FirstStage::zeros(&layout);
    for (i, row) in first.speed.iter_mut().enumerate() {
        let node = plant.graph.node(NodeId(i));
        if node.kind.has_speed() {
            for (t, v) in row.iter_mut().enumerate() {
                *v = node.speed_bound[seq.levels[t]];
            }
        }
    }
    first.initial_inventory.iter_mut().for_each(|v| *v = stock);
    first
}

#[test]
fn idle_plan_moves_nothing() {
    let toy = random_toy(1, 6, 2);
    let first = FirstStage::zeros(&Layout::new(&toy.plant, 6));
    for sc in &toy.scenarios {
        let tr = forward_simulate(&toy.plant, &toy.sequence, &first, sc).unwrap();
        assert!(tr.flow.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.reactor_dry.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn mismatched_horizon_is_rejected() {
    let toy = random_toy(1, 6, 1);
    let first = FirstStage::zeros(&Layout::new(&toy.plant, 5));
    assert!(forward_simulate(&toy.plant, &toy.sequence, &first, &toy.scenarios[0]).is_err());
}

fn check_against_lp(plant: &Plant, seq: &BaleSequence, scenarios: &[Scenario], penalty: f64) -> usize {
    let ef = build_extensive_form(plant, seq, scenarios, penalty).unwrap();
    let sol = solve_lp(&ef.model, &Tolerances::default());
    assert_eq!(sol.status, Status::Optimal);
    let first = ef.first_stage(&sol.x).unwrap();
    let layout = &ef.layout;
    let mut compared = 0;
    for (s, sc) in scenarios.iter().enumerate() {
        let x = ef.block_values(&sol.x, s);
        let tr = forward_simulate(plant, seq, &first, sc).unwrap();
        assert!(tr.events.iter().all(|e| e.magnitude < 1e-6), "{:?}", tr.events.first());
        for t in 0..seq.len() {
            for i in 0..layout.nodes {
                let lp = x[layout.flow(NodeId(i), t)];
                assert!((tr.flow[i][t] - lp).abs() <= 1e-6 * (1.0 + lp.abs()), "node {i} period {t}: {} vs {lp}", tr.flow[i][t]);
                compared += 1;
            }
            for (k, node) in layout.holding.iter().enumerate() {
                let lp = x[layout.held(k, t)];
                assert!((tr.inventory[node.0][t] - lp).abs() <= 1e-6 * (1.0 + lp.abs()));
            }
        }
    }
    compared
}

#[test]
fn simulation_reproduces_lp_flows_on_toys() {
    for seed in 0..10 {
        let toy = random_toy(60 + seed, 8, 3);
        assert!(check_against_lp(&toy.plant, &toy.sequence, &toy.scenarios, 50.0) > 0);
    }
}

#[test]
fn simulation_reproduces_lp_flows_on_the_canonical_plant() {
    let plant = pdu_plant();
    let seq = BaleSequence::uniform(MoistureLevel::Medium, 20);
    let opts = GenOptions { noise: true, failures: FailureMode::Both };
    let set = generate_scenario_set(&plant, &seq, 3, 5, opts).unwrap();
    assert_eq!(check_against_lp(&plant, &seq, &set.scenarios, 100.0), 3 * 20 * plant.graph.len());
}

#[test]
fn stopped_discharge_overfills_the_bin() {
    let toy = random_toy(4, 12, 1);
    let mut sc = toy.scenarios[0].clone();
    sc.operating[0].iter_mut().for_each(|o| *o = true);
    // A bin that never discharges while the line keeps feeding it.
    let bin = toy.plant.graph.storage().unwrap();
    let mut plant = toy.plant.clone();
    plant.graph.nodes[bin.0].speed_bound = crate::plant::PerLevel::uniform(0.0);
    let first = full_speed(&plant, &toy.sequence, plant.graph.node(bin).volume_cap_m3 * sc.density[bin.0][0]);
    let tr = forward_simulate(&plant, &toy.sequence, &first, &sc).unwrap();
    let over: Vec<_> = tr.events.iter().filter(|e| e.kind == ViolationKind::BinCapacity).collect();
    assert!(!over.is_empty());
    assert!(over.iter().all(|e| e.magnitude > 0.0 && e.node == bin));
    assert!(tr.has_bin_violation());
}

fn assert_balanced(tr: &Trajectory) {
    for i in 0..tr.flow.len() {
        for t in 0..tr.reactor_dry.len() {
            let scale = 1.0 + tr.inflow[i][t].abs() + tr.flow[i][t].abs() + tr.inventory[i][t].abs();
            assert!(tr.imbalance(i, t).abs() <= 1e-9 * scale, "node {i} period {t}: {}", tr.imbalance(i, t));
        }
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
    #[test]
    fn mass_is_accounted_for(seed in 0u64..10_000, stock in 0.0f64..1.5, throttle in 0.0f64..1.0) {
        use rand::{Rng, SeedableRng};
        let plant = pdu_plant();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seq = BaleSequence::uniform(MoistureLevel::ALL[(seed % 3) as usize], 15);
        let opts = GenOptions { noise: true, failures: FailureMode::Both };
        let sc = crate::scenario::sample_scenario(&plant, &seq, seed, 0, opts).unwrap();
        let bin = plant.graph.storage().unwrap();
        let mut first = full_speed(&plant, &seq, stock * plant.graph.node(bin).volume_cap_m3 * sc.density[bin.0][0]);
        for v in first.speed.iter_mut().flatten() {
            *v *= throttle + (1.0 - throttle) * rng.gen::<f64>();
        }
        let tr = forward_simulate(&plant, &seq, &first, &sc).unwrap();
        assert_balanced(&tr);
    }
}

#[test]
fn utilization_matches_reported_ratios() {
    assert_eq!((utilization(2.25, 2.7) * 100.0).round(), 83.0);
    assert_eq!((utilization(3.85, 4.8) * 100.0).round(), 80.0);
    assert_eq!(utilization(1.0, 0.0), 0.0);
}

fn synthetic(plant: &Plant, seq: &BaleSequence, dry: &[f64]) -> Trajectory {
    let n = plant.graph.len();
    let horizon = seq.len();
    Trajectory {
        flow: vec![vec![0.0; horizon]; n],
        inflow: vec![vec![0.0; horizon]; n],
        inventory: vec![vec![0.0; horizon]; n],
        process_loss: vec![vec![0.0; horizon]; n],
        spill: vec![vec![0.0; horizon]; n],
        reactor_dry: dry.to_vec(),
        events: Vec::new(),
        opening: vec![0.0; n],
    }
}

#[test]
fn cost_per_ton_is_rate_times_hours_over_dry_tons() {
    let toy = random_toy(2, 4, 1);
    let mut plant = toy.plant.clone();
    for (i, node) in plant.graph.nodes.iter_mut().enumerate() {
        node.energy_cost_per_hr = crate::plant::PerLevel::uniform(10.0 * (i + 1) as f64);
        node.fixed_cost_per_hr = crate::plant::PerLevel::uniform(3.0);
    }
    let seq = BaleSequence::uniform(MoistureLevel::High, 4);
    let trs = vec![synthetic(&plant, &seq, &[10.0, 20.0, 30.0, 40.0]), synthetic(&plant, &seq, &[0.0, 0.0, 50.0, 50.0])];
    let m = compute_metrics(&trs, &plant, &seq).unwrap();
    // Energy 150 $/hr and fixed 15 $/hr over 4 one-minute periods; 100 kg dry on average.
    let tons = 100.0 / KG_PER_TON;
    let cost = m.cost.unwrap();
    assert!((cost.energy - 150.0 * 4.0 / 60.0 / tons).abs() < 1e-9);
    assert!((cost.fixed - 15.0 * 4.0 / 60.0 / tons).abs() < 1e-9);
    assert!((cost.total - 165.0 * 4.0 / 60.0 / tons).abs() < 1e-9);
    assert!((m.reactor_flow - 25.0 * 60.0 / KG_PER_TON).abs() < 1e-12);
}

#[test]
fn zero_delivery_leaves_cost_undefined() {
    let toy = random_toy(2, 4, 1);
    let trs = vec![synthetic(&toy.plant, &toy.sequence, &[0.0; 4])];
    let m = compute_metrics(&trs, &toy.plant, &toy.sequence).unwrap();
    assert!(m.cost.is_none());
    assert_eq!(m.utilization, 0.0);
    assert!(compute_metrics(&[], &toy.plant, &toy.sequence).is_err());
}

#[test]
fn reliability_extremes() {
    let seq = BaleSequence::uniform(MoistureLevel::Low, 12);
    let base = pdu_plant();
    let first = full_speed(&base, &seq, 0.0);
    let spec = OutOfSample { scenarios: 40, seed: 3, options: GenOptions { noise: true, failures: FailureMode::None } };
    let mut easy = base.clone();
    easy.config.target_rate = 0.0;
    assert_eq!(out_of_sample_reliability(&easy, &seq, &first, &spec).unwrap().reliability, 1.0);
    let mut hard = base.clone();
    hard.config.target_rate = base.config.reactor_capacity * 1.01;
    assert_eq!(out_of_sample_reliability(&hard, &seq, &first, &spec).unwrap().reliability, 0.0);
}

#[test]
fn reliability_report_is_thread_count_independent() {
    let plant = pdu_plant();
    let seq = BaleSequence::uniform(MoistureLevel::High, 20);
    let first = full_speed(&plant, &seq, 500.0);
    let spec = OutOfSample { scenarios: 30, seed: 9, options: GenOptions { noise: true, failures: FailureMode::Both } };
    let many = out_of_sample_reliability(&plant, &seq, &first, &spec).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| out_of_sample_reliability(&plant, &seq, &first, &spec).unwrap());
    assert_eq!(many, one);
    assert!(!many.by_node.is_empty());
}

#[test]
fn spread_of_trivial_samples_is_zero() {
    assert_eq!(relative_spread(&[5.0]), 0.0);
    assert_eq!(relative_spread(&[-3.0, -3.0, -3.0]), 0.0);
    assert!((relative_spread(&[-100.0, -99.0]) - 1.0 / 99.0).abs() < 1e-15);
}

#[test]
fn single_replication_has_no_spread() {
    let plant = pdu_plant();
    let seq = BaleSequence::uniform(MoistureLevel::Low, 10);
    let rows = stability_test(
        &plant,
        &seq,
        &[4],
        1,
        1,
        GenOptions::default(),
        &crate::optimizer::BisectionParams::default(),
        crate::optimizer::BendersOptions::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].spread, 0.0);
    assert_eq!(rows[0].objectives.len(), 1);
}
