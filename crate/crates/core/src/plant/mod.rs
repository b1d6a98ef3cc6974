//! Plant topology and deterministic equipment parameters.

mod config;
mod topology;

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

pub use config::{build_plant, load_plant, pdu_plant, PlantDocument, PDU_JSON};
pub use topology::{validate_topology, Diagnostic};

pub const IN2_TO_M2: f64 = 0.000_645_16;
pub const IN_TO_M: f64 = 0.0254;
/// Short (US) ton.
pub const KG_PER_TON: f64 = 907.184_74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoistureLevel {
    Low,
    Medium,
    High,
}

impl MoistureLevel {
    pub const ALL: [MoistureLevel; 3] = [MoistureLevel::Low, MoistureLevel::Medium, MoistureLevel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            MoistureLevel::Low => 'L',
            MoistureLevel::Medium => 'M',
            MoistureLevel::High => 'H',
        }
    }
}

/// One value per moisture level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerLevel<T> {
    pub low: T,
    pub medium: T,
    pub high: T,
}

impl<T: Copy> PerLevel<T> {
    pub fn uniform(v: T) -> Self {
        Self { low: v, medium: v, high: v }
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> PerLevel<U> {
        PerLevel {
            low: f(self.low),
            medium: f(self.medium),
            high: f(self.high),
        }
    }
}

impl<T> Index<MoistureLevel> for PerLevel<T> {
    type Output = T;
    fn index(&self, l: MoistureLevel) -> &T {
        match l {
            MoistureLevel::Low => &self.low,
            MoistureLevel::Medium => &self.medium,
            MoistureLevel::High => &self.high,
        }
    }
}

impl<T> IndexMut<MoistureLevel> for PerLevel<T> {
    fn index_mut(&mut self, l: MoistureLevel) -> &mut T {
        match l {
            MoistureLevel::Low => &mut self.low,
            MoistureLevel::Medium => &mut self.medium,
            MoistureLevel::High => &mut self.high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquipmentKind {
    BaleInfeed,
    Grinder,
    Transport,
    Storage,
    PelletMill,
}

impl EquipmentKind {
    pub fn is_processing(self) -> bool {
        matches!(self, EquipmentKind::Grinder | EquipmentKind::PelletMill)
    }

    /// Nodes whose speed is a decision.
    pub fn has_speed(self) -> bool {
        matches!(self, EquipmentKind::BaleInfeed | EquipmentKind::Transport | EquipmentKind::Storage)
    }
}

/// Closed interval `[lo, hi]`; the table order of the endpoints is not assumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Self { lo: a.min(b), hi: a.max(b) }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Median particle size and spread ratio intervals for one moisture level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdRange {
    pub median_mm: Interval,
    pub spread_ratio: Interval,
}

/// Linear density model `intercept + moisture*m + median*rho50 (+ ratio*spread) + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub intercept: f64,
    pub moisture: f64,
    pub median: f64,
    pub spread_ratio: f64,
    pub include_spread_ratio: bool,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equipment {
    pub id: String,
    pub kind: EquipmentKind,
    pub feeds: Vec<NodeId>,
    pub cross_section_m2: f64,
    pub energy_cost_per_hr: PerLevel<f64>,
    pub fixed_cost_per_hr: PerLevel<f64>,
    /// m per period.
    pub speed_bound: PerLevel<f64>,
    pub dry_matter_loss: f64,
    pub moisture_loss: PerLevel<f64>,
    /// kg dry matter per period.
    pub infeed_cap: PerLevel<f64>,
    /// Fraction of a period the material spends inside the unit.
    pub residence_periods: f64,
    pub volume_cap_m3: f64,
    pub volume_floor_m3: f64,
    pub psd: Option<PerLevel<PsdRange>>,
    pub density_model: Option<DensityModel>,
    /// Bulk density of the product stream for units without a density model.
    pub output_density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquipmentGraph {
    pub nodes: Vec<Equipment>,
    pub source: NodeId,
    pub separation_feed: NodeId,
    pub secondary_head: NodeId,
    pub bypass_head: NodeId,
    pub reactor_feed: NodeId,
    pub bale_cross_section_m2: f64,
    /// Topological order (ties broken by node index).
    pub order: Vec<NodeId>,
}

impl EquipmentGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Equipment {
        &self.nodes[id.0]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == name).map(NodeId)
    }

    pub fn of_kind(&self, kind: EquipmentKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| NodeId(i))
    }

    pub fn storage(&self) -> Option<NodeId> {
        self.of_kind(EquipmentKind::Storage).next()
    }

    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.feeds.contains(&id))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// Nodes upstream of the first storage node (those that can stop the line).
    pub fn upstream_of_storage(&self) -> Vec<NodeId> {
        let Some(st) = self.storage() else { return Vec::new() };
        let mut seen = vec![false; self.len()];
        let mut stack = self.node(st).feeds.clone();
        while let Some(n) = stack.pop() {
            if !seen[n.0] {
                seen[n.0] = true;
                stack.extend(self.node(n).feeds.iter().copied());
            }
        }
        (0..self.len()).filter(|&i| seen[i]).map(NodeId).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangular {
    pub min: f64,
    pub mode: f64,
    pub max: f64,
}

impl Triangular {
    pub fn mean(&self) -> f64 {
        (self.min + self.mode + self.max) / 3.0
    }
}

/// Weibull up-time and uniform down-time parameters (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageParams {
    pub shape: f64,
    pub scale_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub short: PerLevel<OutageParams>,
    pub long: PerLevel<OutageParams>,
    /// Equipment ids with their own renewal processes.
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub period_s: f64,
    pub horizon: usize,
    /// kg dry matter per period.
    pub reactor_capacity: f64,
    /// kg dry matter per period (average over the horizon).
    pub target_rate: f64,
    pub risk: f64,
    pub saa_risk: f64,
    /// $ per kg held at time zero.
    pub holding_cost_per_kg: f64,
    pub holding_weight: f64,
    pub moisture_bands: PerLevel<Interval>,
    pub bale_density: Triangular,
    pub screen_mm: f64,
    pub failures: FailureModel,
}

impl PlantConfig {
    pub fn periods_per_hour(&self) -> f64 {
        3600.0 / self.period_s
    }

    pub fn dt_per_hr_to_kg_per_period(&self, v: f64) -> f64 {
        v * KG_PER_TON / self.periods_per_hour()
    }

    pub fn kg_per_period_to_dt_per_hr(&self, v: f64) -> f64 {
        v * self.periods_per_hour() / KG_PER_TON
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub graph: EquipmentGraph,
    pub config: PlantConfig,
}

impl Plant {
    /// Copy with every storage volume (floor and cap) scaled.
    pub fn with_storage_scale(&self, scale: f64) -> Plant {
        let mut p = self.clone();
        for n in p.graph.nodes.iter_mut().filter(|n| n.kind == EquipmentKind::Storage) {
            n.volume_cap_m3 *= scale;
            n.volume_floor_m3 *= scale;
        }
        p
    }

    /// Copy with reactor capacity and target given in dry tons per hour.
    pub fn with_reactor(&self, capacity_dt_hr: f64, target_dt_hr: f64) -> Plant {
        let mut p = self.clone();
        p.config.reactor_capacity = p.config.dt_per_hr_to_kg_per_period(capacity_dt_hr);
        p.config.target_rate = p.config.dt_per_hr_to_kg_per_period(target_dt_hr);
        p
    }

    /// Copy with every grinder's median size and spread ratio intervals shifted.
    pub fn with_psd_shift(&self, median_mm: f64, spread_ratio: f64) -> Plant {
        let mut p = self.clone();
        for n in p.graph.nodes.iter_mut() {
            if let Some(psd) = n.psd.as_mut() {
                for l in MoistureLevel::ALL {
                    let r = &mut psd[l];
                    r.median_mm = Interval::new(r.median_mm.lo + median_mm, r.median_mm.hi + median_mm);
                    r.spread_ratio = Interval::new(r.spread_ratio.lo + spread_ratio, r.spread_ratio.hi + spread_ratio);
                }
            }
        }
        p
    }
}

#[cfg(test)]
mod tests;
