//! Small random line instances for cross-checking solvers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::plant::{
    EquipmentGraph, Equipment, EquipmentKind, FailureModel, Interval, MoistureLevel, NodeId, OutageParams, PerLevel,
    Plant, PlantConfig, Triangular,
};
use crate::scenario::{BaleSequence, Pattern, Scenario};

#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub plant: Plant,
    pub sequence: BaleSequence,
    pub scenarios: Vec<Scenario>,
}

fn unit(id: &str, kind: EquipmentKind, feeds: Vec<NodeId>) -> Equipment {
    Equipment {
        id: id.into(),
        kind,
        feeds,
        cross_section_m2: 0.0,
        energy_cost_per_hr: PerLevel::uniform(1.0),
        fixed_cost_per_hr: PerLevel::uniform(0.0),
        speed_bound: PerLevel::uniform(0.0),
        dry_matter_loss: 0.0,
        moisture_loss: PerLevel::uniform(0.0),
        infeed_cap: PerLevel::uniform(f64::INFINITY),
        residence_periods: 0.0,
        volume_cap_m3: 0.0,
        volume_floor_m3: 0.0,
        psd: None,
        density_model: None,
        output_density: None,
    }
}

/// Five-node line: infeed, splitter, two branches and a storage bin feeding the reactor.
pub fn toy_plant(rng: &mut impl Rng) -> Plant {
    let mut src = unit("infeed", EquipmentKind::BaleInfeed, vec![]);
    src.speed_bound = PerLevel::uniform(rng.gen_range(1.5..3.0));
    let mut split = unit("splitter", EquipmentKind::Transport, vec![NodeId(0)]);
    let mut a = unit("branch-a", EquipmentKind::Transport, vec![NodeId(1)]);
    let mut b = unit("branch-b", EquipmentKind::Transport, vec![NodeId(1)]);
    for t in [&mut split, &mut a, &mut b] {
        t.cross_section_m2 = rng.gen_range(0.03..0.06);
        t.speed_bound = PerLevel::uniform(rng.gen_range(4.0..10.0));
    }
    let mut bin = unit("bin", EquipmentKind::Storage, vec![NodeId(2), NodeId(3)]);
    bin.cross_section_m2 = 0.05;
    bin.speed_bound = PerLevel::uniform(rng.gen_range(3.0..6.0));
    bin.volume_cap_m3 = rng.gen_range(1.0..3.0);
    bin.volume_floor_m3 = bin.volume_cap_m3 * rng.gen_range(0.0..0.2);
    let outage = OutageParams { shape: 1.0, scale_s: 1.0, min_s: 0.0, max_s: 0.0 };
    let config = PlantConfig {
        period_s: 60.0,
        horizon: 0,
        reactor_capacity: rng.gen_range(20.0..30.0),
        target_rate: rng.gen_range(8.0..20.0),
        risk: 0.2,
        saa_risk: 0.2,
        holding_cost_per_kg: 0.02,
        holding_weight: 0.01,
        moisture_bands: PerLevel {
            low: Interval::new(0.05, 0.10),
            medium: Interval::new(0.10, 0.175),
            high: Interval::new(0.175, 0.25),
        },
        bale_density: Triangular { min: 170.0, mode: 200.0, max: 235.0 },
        screen_mm: 6.35,
        failures: FailureModel { short: PerLevel::uniform(outage), long: PerLevel::uniform(outage), nodes: vec![] },
    };
    let graph = EquipmentGraph {
        nodes: vec![src, split, a, b, bin],
        source: NodeId(0),
        separation_feed: NodeId(1),
        secondary_head: NodeId(2),
        bypass_head: NodeId(3),
        reactor_feed: NodeId(4),
        bale_cross_section_m2: 0.1,
        order: (0..5).map(NodeId).collect(),
    };
    Plant { graph, config }
}

/// Scenario with independently drawn stream properties and occasional infeed stops.
pub fn toy_scenario(plant: &Plant, horizon: usize, rng: &mut impl Rng) -> Scenario {
    let n = plant.graph.len();
    let mut sc = Scenario {
        bale_density: (0..horizon).map(|_| rng.gen_range(170.0..235.0)).collect(),
        moisture: vec![vec![0.0; horizon]; n],
        density: vec![vec![0.0; horizon]; n],
        psd: vec![Vec::new(); n],
        bypass: (0..horizon).map(|_| rng.gen_range(0.0..1.0)).collect(),
        operating: vec![vec![true; horizon]; n],
    };
    for t in 0..horizon {
        let m = rng.gen_range(0.05..0.25);
        for i in 0..n {
            sc.moisture[i][t] = m;
            sc.density[i][t] = if i == 0 { sc.bale_density[t] } else { rng.gen_range(100.0..160.0) };
        }
        sc.operating[0][t] = !rng.gen_bool(0.1);
    }
    sc
}

pub fn random_toy(seed: u64, horizon: usize, count: usize) -> ToyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plant = toy_plant(&mut rng);
    let levels = (0..horizon).map(|_| MoistureLevel::ALL[rng.gen_range(0..3)]).collect();
    let sequence = BaleSequence { levels, pattern: Pattern::Random, mix: PerLevel::uniform(1.0 / 3.0) };
    let scenarios = (0..count).map(|_| toy_scenario(&plant, horizon, &mut rng)).collect();
    ToyInstance { plant, sequence, scenarios }
}
