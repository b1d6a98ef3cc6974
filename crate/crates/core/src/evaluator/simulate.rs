//! Period-by-period replay of a fixed first stage on one scenario.
//!
//! Flows follow the same relations as the scenario blocks of the LP. Where a
//! limit would be broken the flow is cut back at that node and the excess is
//! recorded as an event; the run never fails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{FirstStage, Layout};
use crate::plant::{EquipmentKind, NodeId, Plant};
use crate::scenario::{BaleSequence, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Conveyor flow above what its speed and cross section carry.
    ConveyorCapacity,
    /// Dry flow above a unit's infeed limit.
    InfeedLimit,
    /// Dry flow above the reactor limit.
    ReactorLimit,
    /// Bin level would exceed its volume; the excess spills.
    BinCapacity,
    /// Bin level would fall below its floor; the discharge is cut.
    BinFloor,
    /// Material held in a mill above its volume; the excess spills.
    MillCapacity,
}

impl ViolationKind {
    pub fn is_bin_bound(self) -> bool {
        matches!(self, ViolationKind::BinCapacity | ViolationKind::BinFloor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub node: NodeId,
    pub period: usize,
    pub kind: ViolationKind,
    /// kg cut back or spilled.
    pub magnitude: f64,
}

/// Simulated flows. Per-node vectors are indexed `[node][period]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// kg leaving each node.
    pub flow: Vec<Vec<f64>>,
    /// kg reaching each node (its share of the upstream flows).
    pub inflow: Vec<Vec<f64>>,
    /// Level at the end of each period for nodes that hold material, zero elsewhere.
    pub inventory: Vec<Vec<f64>>,
    /// Dry matter and moisture removed by processing.
    pub process_loss: Vec<Vec<f64>>,
    /// Material spilled at the node.
    pub spill: Vec<Vec<f64>>,
    /// Dry kg delivered to the reactor per period.
    pub reactor_dry: Vec<f64>,
    pub events: Vec<ViolationEvent>,
    /// Starting level of each node (the first-stage stock for storage).
    pub opening: Vec<f64>,
}

impl Trajectory {
    /// Mean dry feed per period.
    pub fn mean_feed(&self) -> f64 {
        if self.reactor_dry.is_empty() {
            0.0
        } else {
            self.reactor_dry.iter().sum::<f64>() / self.reactor_dry.len() as f64
        }
    }

    pub fn meets(&self, target: f64, tol: f64) -> bool {
        self.mean_feed() >= target - tol
    }

    pub fn has_bin_violation(&self) -> bool {
        self.events.iter().any(|e| e.kind.is_bin_bound())
    }

    /// `inflow - outflow - change in level - losses - spill` at one node and period.
    pub fn imbalance(&self, node: usize, t: usize) -> f64 {
        let prev = if t == 0 { self.opening[node] } else { self.inventory[node][t - 1] };
        self.inflow[node][t] - self.flow[node][t] - (self.inventory[node][t] - prev) - self.process_loss[node][t] - self.spill[node][t]
    }
}

/// Gates as in the LP blocks: upstream outages stop the source, downstream ones the discharge.
fn gates(plant: &Plant, upstream: &[NodeId], sc: &Scenario, t: usize) -> (bool, bool) {
    let storage = plant.graph.storage();
    let mut up = true;
    let mut down = true;
    for (i, o) in sc.operating.iter().enumerate() {
        if storage.is_none() || upstream.contains(&NodeId(i)) {
            up &= o[t];
        } else if Some(NodeId(i)) != storage {
            down &= o[t];
        }
    }
    (up, down)
}

struct Recorder<'a> {
    traj: &'a mut Trajectory,
    t: usize,
}

impl Recorder<'_> {
    /// Cut `value` down to `limit`, recording the excess as an event and as spill.
    fn clip(&mut self, node: NodeId, value: f64, limit: f64, kind: ViolationKind) -> f64 {
        let kept = self.hold_back(node, value, limit, kind);
        self.traj.spill[node.0][self.t] += value - kept;
        kept
    }

    /// Cut `value` down to `limit`, recording an event; the excess stays where it was.
    fn hold_back(&mut self, node: NodeId, value: f64, limit: f64, kind: ViolationKind) -> f64 {
        if value > limit + LIMIT_TOL * (1.0 + limit.abs()) {
            self.traj.events.push(ViolationEvent { node, period: self.t, kind, magnitude: value - limit });
            limit
        } else {
            value
        }
    }
}

/// Relative tolerance below which a limit counts as met.
pub const LIMIT_TOL: f64 = 1e-9;

pub fn forward_simulate(plant: &Plant, seq: &BaleSequence, first: &FirstStage, sc: &Scenario) -> Result<Trajectory> {
    let g = &plant.graph;
    let n = g.len();
    let horizon = seq.len();
    if sc.horizon() != horizon || first.horizon() != horizon || first.speed.len() != n {
        return Err(Error::Dimension("first stage, scenario and sequence must share the plant and horizon".into()));
    }
    let layout = Layout::new(plant, horizon);
    if first.initial_inventory.len() != layout.storage.len() {
        return Err(Error::Dimension("one starting stock per storage node expected".into()));
    }
    let upstream = g.upstream_of_storage();
    let zeros = || vec![vec![0.0; horizon]; n];
    let mut traj = Trajectory {
        flow: zeros(),
        inflow: zeros(),
        inventory: zeros(),
        process_loss: zeros(),
        spill: zeros(),
        reactor_dry: vec![0.0; horizon],
        events: Vec::new(),
        opening: vec![0.0; n],
    };
    for (k, s) in layout.storage.iter().enumerate() {
        traj.opening[s.0] = first.initial_inventory[k];
    }
    let cap = plant.config.reactor_capacity;
    for t in 0..horizon {
        let level = seq.levels[t];
        let (up, down) = gates(plant, &upstream, sc, t);
        for &id in &g.order {
            let i = id.0;
            let node = g.node(id);
            let m = sc.moisture_at(id, t);
            let d = sc.density_at(id, t);
            let v = first.speed[i][t];
            let fed: f64 = node.feeds.iter().map(|f| traj.flow[f.0][t]).sum();
            let prev = if t == 0 { traj.opening[i] } else { traj.inventory[i][t - 1] };
            let mut rec = Recorder { traj: &mut traj, t };
            let mut out = match node.kind {
                EquipmentKind::BaleInfeed => {
                    let x = if up { g.bale_cross_section_m2 * sc.bale_density[t] * v } else { 0.0 };
                    rec.traj.inflow[i][t] = x;
                    x
                }
                EquipmentKind::Grinder => {
                    let kept = 1.0 - node.dry_matter_loss - node.moisture_loss[level];
                    rec.traj.inflow[i][t] = fed;
                    rec.traj.process_loss[i][t] = (1.0 - kept) * fed;
                    kept * fed
                }
                EquipmentKind::Transport => {
                    let share = if id == g.bypass_head {
                        sc.bypass[t]
                    } else if id == g.secondary_head {
                        1.0 - sc.bypass[t]
                    } else {
                        1.0
                    };
                    let x = share * fed;
                    rec.traj.inflow[i][t] = x;
                    let limit = if sc.operating[i][t] { node.cross_section_m2 * d * v } else { 0.0 };
                    rec.clip(id, x, limit, ViolationKind::ConveyorCapacity)
                }
                EquipmentKind::Storage => {
                    rec.traj.inflow[i][t] = fed;
                    let mut wanted = if down { node.cross_section_m2 * d * v } else { 0.0 };
                    // Discharge limits leave the material in the bin.
                    if node.infeed_cap[level].is_finite() {
                        wanted = rec.hold_back(id, wanted, node.infeed_cap[level] / (1.0 - m), ViolationKind::InfeedLimit);
                    }
                    if id == g.reactor_feed {
                        wanted = rec.hold_back(id, wanted, cap / (1.0 - m), ViolationKind::ReactorLimit);
                    }
                    let floor = node.volume_floor_m3 * d;
                    let available = (prev + fed - floor).max(0.0);
                    let x = rec.hold_back(id, wanted, available, ViolationKind::BinFloor);
                    let level_after = prev + fed - x;
                    let top = if node.volume_cap_m3 > 0.0 { node.volume_cap_m3 * d } else { f64::INFINITY };
                    rec.traj.inventory[i][t] = rec.clip(id, level_after, top, ViolationKind::BinCapacity);
                    x
                }
                EquipmentKind::PelletMill => {
                    let a = node.residence_periods;
                    let kept = 1.0 - node.moisture_loss[level];
                    rec.traj.inflow[i][t] = fed;
                    rec.traj.process_loss[i][t] = (1.0 - kept) * ((1.0 - a) * fed + prev);
                    let d_in = node.feeds.first().map_or(d, |f| sc.density_at(*f, t));
                    let top = if node.volume_cap_m3 > 0.0 { node.volume_cap_m3 * d_in } else { f64::INFINITY };
                    rec.traj.inventory[i][t] = rec.clip(id, a * fed, top, ViolationKind::MillCapacity);
                    kept * ((1.0 - a) * fed + prev)
                }
            };
            if node.kind != EquipmentKind::Storage {
                let infeed = node.infeed_cap[level];
                if infeed.is_finite() {
                    out = rec.clip(id, out, infeed / (1.0 - m), ViolationKind::InfeedLimit);
                }
                if id == g.reactor_feed {
                    out = rec.clip(id, out, cap / (1.0 - m), ViolationKind::ReactorLimit);
                }
            }
            if id == g.reactor_feed {
                rec.traj.reactor_dry[t] = (1.0 - m) * out;
            }
            traj.flow[i][t] = out;
        }
    }
    Ok(traj)
}
