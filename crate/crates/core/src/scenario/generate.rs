use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::failures::{generate_failure_schedule, FailureMode};
use super::kernels::{bypass_ratio, density_regression, psd_from_ratio, sample_bale_density, sample_moisture, sample_psd};
use super::{BaleSequence, Psd, Scenario, ScenarioSet};
use crate::error::{Error, Result};
use crate::plant::{EquipmentGraph, EquipmentKind, MoistureLevel, NodeId, Plant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GenOptions {
    pub failures: FailureMode,
    pub noise: bool,
}

/// Independent stream for scenario `index` under `seed`.
pub fn scenario_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Grinder whose particle sizes drive the separation split.
fn separating_grinder(g: &EquipmentGraph) -> Result<NodeId> {
    let mut cur = g.separation_feed;
    loop {
        let n = g.node(cur);
        if n.kind == EquipmentKind::Grinder {
            return Ok(cur);
        }
        match n.feeds.first() {
            Some(&f) => cur = f,
            None => return Err(Error::Topology("no grinder upstream of the separation feed".into())),
        }
    }
}

/// Per-period draws feeding the stream propagation.
struct PeriodDraw {
    bale_density: f64,
    bale_moisture: f64,
    psd: Vec<Option<Psd>>,
    noise: Vec<f64>,
}

struct Streams<'a> {
    plant: &'a Plant,
    splitter: NodeId,
}

impl Streams<'_> {
    /// Fill node moisture/density for one period; returns the bypass share.
    fn propagate(&self, level: MoistureLevel, draw: &PeriodDraw, t: usize, sc: &mut Scenario) -> Result<f64> {
        let g = &self.plant.graph;
        let n = g.len();
        let mut weight = vec![0.0; n];
        let psd = draw.psd[self.splitter.0].ok_or_else(|| Error::Topology("separating grinder has no size table".into()))?;
        let theta = bypass_ratio(&psd, self.plant.config.screen_mm)?;
        for &id in &g.order {
            let node = g.node(id);
            let (mut w_in, mut mw, mut inv_d) = (0.0, 0.0, 0.0);
            for f in &node.feeds {
                let w = weight[f.0];
                w_in += w;
                mw += w * sc.moisture[f.0][t];
                inv_d += w / sc.density[f.0][t];
            }
            let share = if id == g.bypass_head {
                theta
            } else if id == g.secondary_head {
                1.0 - theta
            } else {
                1.0
            };
            let (m_in, d_in) = match node.feeds.as_slice() {
                [single] => (sc.moisture[single.0][t], sc.density[single.0][t]),
                _ if w_in > 0.0 => (mw / w_in, w_in / inv_d),
                _ => (0.0, 0.0),
            };
            let (w, m, d) = match node.kind {
                EquipmentKind::BaleInfeed => (1.0, draw.bale_moisture, draw.bale_density),
                EquipmentKind::Grinder => {
                    let loss = node.moisture_loss[level];
                    let m = m_in * (1.0 - loss);
                    let model = node
                        .density_model
                        .ok_or_else(|| Error::MissingField { node: node.id.clone(), field: "density_model".into() })?;
                    let p = draw.psd[id.0].expect("grinder psd drawn");
                    let d = density_regression(&model, m, &p, draw.noise[id.0])?;
                    (w_in * (1.0 - node.dry_matter_loss - loss), m, d)
                }
                EquipmentKind::PelletMill => {
                    let loss = node.moisture_loss[level];
                    (w_in * (1.0 - loss), m_in * (1.0 - loss), node.output_density.unwrap_or(d_in))
                }
                EquipmentKind::Transport | EquipmentKind::Storage => (w_in * share, m_in, d_in),
            };
            weight[id.0] = w;
            sc.moisture[id.0][t] = m;
            sc.density[id.0][t] = d;
            if let Some(p) = draw.psd[id.0] {
                sc.psd[id.0].push(p);
            }
        }
        Ok(theta)
    }
}

fn empty_scenario(n: usize, horizon: usize) -> Scenario {
    Scenario {
        bale_density: vec![0.0; horizon],
        moisture: vec![vec![0.0; horizon]; n],
        density: vec![vec![0.0; horizon]; n],
        psd: vec![Vec::new(); n],
        bypass: vec![0.0; horizon],
        operating: vec![vec![true; horizon]; n],
    }
}

/// Scenario `index` of the set generated under `seed`.
pub fn sample_scenario(plant: &Plant, seq: &BaleSequence, seed: u64, index: u64, opts: GenOptions) -> Result<Scenario> {
    let g = &plant.graph;
    let n = g.len();
    let horizon = seq.len();
    let streams = Streams { plant, splitter: separating_grinder(g)? };
    let mut rng = scenario_rng(seed, index);
    let mut sc = empty_scenario(n, horizon);
    for (t, &level) in seq.levels.iter().enumerate() {
        let bale_density = sample_bale_density(&plant.config.bale_density, &mut rng);
        let bale_moisture = sample_moisture(&plant.config.moisture_bands, level, &mut rng);
        let mut psd = vec![None; n];
        let mut noise = vec![0.0; n];
        for &id in &g.order {
            let node = g.node(id);
            if let Some(table) = &node.psd {
                psd[id.0] = Some(sample_psd(table, level, &mut rng));
            }
            if let (Some(m), true) = (node.density_model, opts.noise) {
                noise[id.0] = Normal::new(0.0, m.noise_sd).expect("finite sd").sample(&mut rng);
            }
        }
        let draw = PeriodDraw { bale_density, bale_moisture, psd, noise };
        sc.bale_density[t] = bale_density;
        sc.bypass[t] = streams.propagate(level, &draw, t, &mut sc)?;
    }
    let failing: Vec<NodeId> = plant.config.failures.nodes.iter().filter_map(|name| g.find(name)).collect();
    // Failures read a distant part of the stream so toggling them leaves the other draws unchanged.
    let mut frng = scenario_rng(seed, index);
    frng.set_word_pos(1u128 << 48);
    sc.operating = generate_failure_schedule(&seq.levels, &failing, n, &plant.config.failures, opts.failures, plant.config.period_s, &mut frng);
    Ok(sc)
}

pub fn generate_scenario_set(plant: &Plant, seq: &BaleSequence, count: usize, seed: u64, opts: GenOptions) -> Result<ScenarioSet> {
    let scenarios = (0..count as u64)
        .into_par_iter()
        .map(|s| sample_scenario(plant, seq, seed, s, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        scenarios,
        seed,
        sequence: seq.clone(),
        options: opts,
    })
}

/// Every random quantity at its mean (interval midpoints, triangle mean, no noise, no failures).
pub fn mean_scenario(plant: &Plant, seq: &BaleSequence) -> Result<Scenario> {
    let g = &plant.graph;
    let n = g.len();
    let streams = Streams { plant, splitter: separating_grinder(g)? };
    let mut sc = empty_scenario(n, seq.len());
    for (t, &level) in seq.levels.iter().enumerate() {
        let psd = g
            .nodes
            .iter()
            .map(|node| node.psd.map(|tab| psd_from_ratio(tab[level].median_mm.mid(), tab[level].spread_ratio.mid())))
            .collect();
        let draw = PeriodDraw {
            bale_density: plant.config.bale_density.mean(),
            bale_moisture: plant.config.moisture_bands[level].mid(),
            psd,
            noise: vec![0.0; n],
        };
        sc.bale_density[t] = draw.bale_density;
        sc.bypass[t] = streams.propagate(level, &draw, t, &mut sc)?;
    }
    Ok(sc)
}
