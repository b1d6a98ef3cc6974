//! Utilization, cost per dry ton and inventory summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{Plant, KG_PER_TON};
use crate::scenario::BaleSequence;

use super::reliability::FEED_TOL;
use super::simulate::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPerTon {
    pub energy: f64,
    pub fixed: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean dry feed to the reactor, dry tons per hour.
    pub reactor_flow: f64,
    pub utilization: f64,
    /// `None` when nothing reaches the reactor.
    pub cost: Option<CostPerTon>,
    /// Storage level in tons, averaged over periods and trajectories.
    pub avg_inventory: f64,
    pub max_inventory: f64,
    pub reliability: f64,
}

/// Share of the reactor limit in use.
pub fn utilization(flow: f64, capacity: f64) -> f64 {
    if capacity > 0.0 {
        (flow / capacity).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Cost rates are charged for every period whether or not the line runs.
pub fn cost_per_ton(plant: &Plant, seq: &BaleSequence, dry_tons: f64) -> Option<CostPerTon> {
    if dry_tons <= 0.0 {
        return None;
    }
    let hours = 1.0 / plant.config.periods_per_hour();
    let (mut energy, mut fixed) = (0.0, 0.0);
    for &l in &seq.levels {
        for n in &plant.graph.nodes {
            energy += n.energy_cost_per_hr[l] * hours;
            fixed += n.fixed_cost_per_hr[l] * hours;
        }
    }
    Some(CostPerTon { energy: energy / dry_tons, fixed: fixed / dry_tons, total: (energy + fixed) / dry_tons })
}

pub fn compute_metrics(trajectories: &[Trajectory], plant: &Plant, seq: &BaleSequence) -> Result<Metrics> {
    if trajectories.is_empty() {
        return Err(Error::Degenerate("metrics need at least one trajectory".into()));
    }
    let count = trajectories.len() as f64;
    let cfg = &plant.config;
    let mean_feed = trajectories.iter().map(Trajectory::mean_feed).sum::<f64>() / count;
    let reactor_flow = cfg.kg_per_period_to_dt_per_hr(mean_feed);
    let capacity = cfg.kg_per_period_to_dt_per_hr(cfg.reactor_capacity);
    let dry_tons = mean_feed * seq.len() as f64 / KG_PER_TON;
    let storage: Vec<usize> = plant.graph.of_kind(crate::plant::EquipmentKind::Storage).map(|n| n.0).collect();
    let mut total = 0.0;
    let mut samples = 0usize;
    let mut peak = 0.0f64;
    for tr in trajectories {
        for t in 0..seq.len() {
            let level: f64 = storage.iter().map(|&i| tr.inventory[i][t]).sum();
            total += level;
            peak = peak.max(level);
            samples += 1;
        }
    }
    let met = trajectories.iter().filter(|t| t.meets(cfg.target_rate, FEED_TOL)).count();
    Ok(Metrics {
        reactor_flow,
        utilization: utilization(reactor_flow, capacity),
        cost: cost_per_ton(plant, seq, dry_tons),
        avg_inventory: if samples > 0 { total / samples as f64 / KG_PER_TON } else { 0.0 },
        max_inventory: peak / KG_PER_TON,
        reliability: met as f64 / count,
    })
}
