//! Plant documents: JSON ingestion and unit normalisation.
//!
//! Documents use the units of the published tables (inch, $/hr, dt/hr, percent,
//! seconds). Everything is converted to kg, m and periods on the way in.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DensityModel, Equipment, EquipmentGraph, EquipmentKind, FailureModel, Interval, MoistureLevel,
    NodeId, PerLevel, Plant, PlantConfig, PsdRange, Triangular, IN2_TO_M2, IN_TO_M, KG_PER_TON,
};
use crate::error::{Error, Result};

/// Canonical PDU plant document.
pub const PDU_JSON: &str = include_str!("../../data/pdu.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdDoc {
    pub median_mm: [f64; 2],
    pub spread_ratio: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquipmentDoc {
    pub id: String,
    pub kind: EquipmentKind,
    #[serde(default)]
    pub feeds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_section_in2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_cost_usd_per_hr: Option<PerLevel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_cost_usd_per_hr: Option<PerLevel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_bound_in_per_min: Option<PerLevel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dry_matter_loss_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moisture_loss_pct: Option<PerLevel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeed_cap_dt_per_hr: Option<PerLevel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residence_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_cap_m3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_floor_m3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<PerLevel<PsdDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_model: Option<DensityModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_density_kg_m3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub period_s: f64,
    pub horizon: usize,
    pub reactor_capacity_dt_per_hr: f64,
    pub target_dt_per_hr: f64,
    pub risk: f64,
    pub saa_risk: f64,
    pub holding_cost_usd_per_ton: f64,
    pub holding_weight: f64,
    pub bale_cross_section_in2: f64,
    pub moisture_bands: PerLevel<[f64; 2]>,
    pub bale_density_kg_m3: Triangular,
    pub screen_mm: f64,
    pub failures: FailureModel,
    pub separation_feed: String,
    pub secondary_head: String,
    pub bypass_head: String,
    pub reactor_feed: String,
    pub equipment: Vec<EquipmentDoc>,
}

fn need<T: Clone>(v: &Option<T>, node: &str, field: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::MissingField {
        node: node.to_string(),
        field: field.to_string(),
    })
}

fn fraction(v: f64, node: &str, field: &str) -> Result<f64> {
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("{node}: `{field}` = {v} is not a fraction in [0,1)")))
    }
}

fn non_negative(v: f64, node: &str, field: &str) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{node}: `{field}` = {v} must be finite and non-negative")))
    }
}

fn levels(p: PerLevel<f64>, node: &str, field: &str, check: fn(f64, &str, &str) -> Result<f64>) -> Result<PerLevel<f64>> {
    Ok(PerLevel {
        low: check(p.low, node, field)?,
        medium: check(p.medium, node, field)?,
        high: check(p.high, node, field)?,
    })
}

impl EquipmentDoc {
    fn normalise(&self, period_s: f64) -> Result<Equipment> {
        let id = self.id.as_str();
        let per_hr = 3600.0 / period_s;
        let in_per_min_to_m_per_period = IN_TO_M * period_s / 60.0;
        let kind = self.kind;
        let energy = levels(need(&self.energy_cost_usd_per_hr, id, "energy_cost_usd_per_hr")?, id, "energy_cost_usd_per_hr", non_negative)?;
        let fixed = levels(need(&self.fixed_cost_usd_per_hr, id, "fixed_cost_usd_per_hr")?, id, "fixed_cost_usd_per_hr", non_negative)?;

        let mut eq = Equipment {
            id: self.id.clone(),
            kind,
            feeds: Vec::new(),
            cross_section_m2: 0.0,
            energy_cost_per_hr: energy,
            fixed_cost_per_hr: fixed,
            speed_bound: PerLevel::uniform(0.0),
            dry_matter_loss: 0.0,
            moisture_loss: PerLevel::uniform(0.0),
            infeed_cap: PerLevel::uniform(f64::INFINITY),
            residence_periods: 0.0,
            volume_cap_m3: 0.0,
            volume_floor_m3: 0.0,
            psd: None,
            density_model: None,
            output_density: self.output_density_kg_m3,
        };

        if kind.has_speed() {
            let v = levels(need(&self.speed_bound_in_per_min, id, "speed_bound_in_per_min")?, id, "speed_bound_in_per_min", non_negative)?;
            eq.speed_bound = v.map(|x| x * in_per_min_to_m_per_period);
        }
        if matches!(kind, EquipmentKind::Transport | EquipmentKind::Storage) {
            let g = need(&self.cross_section_in2, id, "cross_section_in2")?;
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("{id}: `cross_section_in2` must be positive")));
            }
            eq.cross_section_m2 = g * IN2_TO_M2;
        }
        if kind.is_processing() {
            let ml = levels(need(&self.moisture_loss_pct, id, "moisture_loss_pct")?.map(|x| x / 100.0), id, "moisture_loss_pct", fraction)?;
            eq.moisture_loss = ml;
            let cap = levels(need(&self.infeed_cap_dt_per_hr, id, "infeed_cap_dt_per_hr")?, id, "infeed_cap_dt_per_hr", non_negative)?;
            eq.infeed_cap = cap.map(|x| x * KG_PER_TON / per_hr);
        }
        match kind {
            EquipmentKind::Grinder => {
                eq.dry_matter_loss = fraction(need(&self.dry_matter_loss_pct, id, "dry_matter_loss_pct")? / 100.0, id, "dry_matter_loss_pct")?;
                for l in MoistureLevel::ALL {
                    if eq.dry_matter_loss + eq.moisture_loss[l] >= 1.0 {
                        return Err(Error::Config(format!("{id}: combined losses reach 100%")));
                    }
                }
                let psd = need(&self.psd, id, "psd")?;
                eq.psd = Some(psd.map(|p| PsdRange {
                    median_mm: Interval::new(p.median_mm[0], p.median_mm[1]),
                    spread_ratio: Interval::new(p.spread_ratio[0], p.spread_ratio[1]),
                }));
                eq.density_model = Some(need(&self.density_model, id, "density_model")?);
            }
            EquipmentKind::PelletMill => {
                let t = need(&self.residence_time_s, id, "residence_time_s")?;
                if !(0.0..period_s).contains(&t) {
                    return Err(Error::Config(format!(
                        "{id}: residence time {t} s must be below the period length {period_s} s"
                    )));
                }
                eq.residence_periods = t / period_s;
                eq.volume_cap_m3 = non_negative(need(&self.volume_cap_m3, id, "volume_cap_m3")?, id, "volume_cap_m3")?;
                eq.output_density = Some(need(&self.output_density_kg_m3, id, "output_density_kg_m3")?);
            }
            EquipmentKind::Storage => {
                let cap = non_negative(need(&self.volume_cap_m3, id, "volume_cap_m3")?, id, "volume_cap_m3")?;
                let floor = non_negative(need(&self.volume_floor_m3, id, "volume_floor_m3")?, id, "volume_floor_m3")?;
                if floor > cap {
                    return Err(Error::Config(format!(
                        "{id}: volume floor {floor} m3 exceeds volume cap {cap} m3"
                    )));
                }
                eq.volume_cap_m3 = cap;
                eq.volume_floor_m3 = floor;
            }
            EquipmentKind::BaleInfeed | EquipmentKind::Transport => {}
        }
        Ok(eq)
    }

    fn from_equipment(e: &Equipment, names: &[String], period_s: f64) -> Self {
        let per_hr = 3600.0 / period_s;
        let m_per_period_to_in_per_min = 60.0 / (IN_TO_M * period_s);
        let kind = e.kind;
        let processing = kind.is_processing();
        EquipmentDoc {
            id: e.id.clone(),
            kind,
            feeds: e.feeds.iter().map(|f| names[f.0].clone()).collect(),
            cross_section_in2: matches!(kind, EquipmentKind::Transport | EquipmentKind::Storage)
                .then(|| e.cross_section_m2 / IN2_TO_M2),
            energy_cost_usd_per_hr: Some(e.energy_cost_per_hr),
            fixed_cost_usd_per_hr: Some(e.fixed_cost_per_hr),
            speed_bound_in_per_min: kind.has_speed().then(|| e.speed_bound.map(|v| v * m_per_period_to_in_per_min)),
            dry_matter_loss_pct: (kind == EquipmentKind::Grinder).then(|| e.dry_matter_loss * 100.0),
            moisture_loss_pct: processing.then(|| e.moisture_loss.map(|v| v * 100.0)),
            infeed_cap_dt_per_hr: processing.then(|| e.infeed_cap.map(|v| v * per_hr / KG_PER_TON)),
            residence_time_s: (kind == EquipmentKind::PelletMill).then(|| e.residence_periods * period_s),
            volume_cap_m3: matches!(kind, EquipmentKind::Storage | EquipmentKind::PelletMill).then_some(e.volume_cap_m3),
            volume_floor_m3: (kind == EquipmentKind::Storage).then_some(e.volume_floor_m3),
            psd: e.psd.map(|p| {
                p.map(|r| PsdDoc {
                    median_mm: [r.median_mm.lo, r.median_mm.hi],
                    spread_ratio: [r.spread_ratio.lo, r.spread_ratio.hi],
                })
            }),
            density_model: e.density_model,
            output_density_kg_m3: e.output_density,
        }
    }
}

impl PlantDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Report a normalised plant back in document units.
    pub fn from_plant(plant: &Plant, name: &str) -> Self {
        let c = &plant.config;
        let g = &plant.graph;
        let names: Vec<String> = g.nodes.iter().map(|n| n.id.clone()).collect();
        PlantDocument {
            name: name.to_string(),
            note: None,
            period_s: c.period_s,
            horizon: c.horizon,
            reactor_capacity_dt_per_hr: c.kg_per_period_to_dt_per_hr(c.reactor_capacity),
            target_dt_per_hr: c.kg_per_period_to_dt_per_hr(c.target_rate),
            risk: c.risk,
            saa_risk: c.saa_risk,
            holding_cost_usd_per_ton: c.holding_cost_per_kg * KG_PER_TON,
            holding_weight: c.holding_weight,
            bale_cross_section_in2: g.bale_cross_section_m2 / IN2_TO_M2,
            moisture_bands: c.moisture_bands.map(|b| [b.lo, b.hi]),
            bale_density_kg_m3: c.bale_density,
            screen_mm: c.screen_mm,
            failures: c.failures.clone(),
            separation_feed: names[g.separation_feed.0].clone(),
            secondary_head: names[g.secondary_head.0].clone(),
            bypass_head: names[g.bypass_head.0].clone(),
            reactor_feed: names[g.reactor_feed.0].clone(),
            equipment: g.nodes.iter().map(|e| EquipmentDoc::from_equipment(e, &names, c.period_s)).collect(),
        }
    }
}

fn check_config(doc: &PlantDocument) -> Result<()> {
    let bad = |m: String| Err(Error::Config(m));
    if !(doc.period_s > 0.0) {
        return bad(format!("period_s must be positive, got {}", doc.period_s));
    }
    if doc.horizon < 1 {
        return bad("horizon must be at least one period".into());
    }
    if !(0.0 < doc.saa_risk && doc.saa_risk <= doc.risk && doc.risk < 1.0) {
        return bad(format!("risk levels must satisfy 0 < saa_risk <= risk < 1, got {} and {}", doc.saa_risk, doc.risk));
    }
    if doc.target_dt_per_hr > doc.reactor_capacity_dt_per_hr {
        return bad(format!(
            "target {} dt/hr exceeds reactor capacity {} dt/hr",
            doc.target_dt_per_hr, doc.reactor_capacity_dt_per_hr
        ));
    }
    let b = &doc.moisture_bands;
    let chain = [b.low, b.medium, b.high];
    if chain.iter().any(|w| w[0] > w[1]) || b.low[1] != b.medium[0] || b.medium[1] != b.high[0] {
        return bad("moisture bands must be contiguous, ordered intervals".into());
    }
    let t = &doc.bale_density_kg_m3;
    if !(t.min <= t.mode && t.mode <= t.max && t.min > 0.0) {
        return bad("bale density triangle must satisfy 0 < min <= mode <= max".into());
    }
    for p in [&doc.failures.short, &doc.failures.long] {
        for l in MoistureLevel::ALL {
            let o = p[l];
            if !(o.shape > 0.0 && o.scale_s > 0.0 && 0.0 <= o.min_s && o.min_s <= o.max_s) {
                return bad(format!("failure parameters for {l:?} are invalid"));
            }
        }
    }
    Ok(())
}

/// Ingest a plant document.
pub fn build_plant(doc: &PlantDocument) -> Result<Plant> {
    check_config(doc)?;
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    for (i, e) in doc.equipment.iter().enumerate() {
        if index.insert(e.id.as_str(), NodeId(i)).is_some() {
            return Err(Error::Config(format!("duplicate equipment id `{}`", e.id)));
        }
    }
    let lookup = |name: &str, what: &str| -> Result<NodeId> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Topology(format!("{what} refers to unknown equipment `{name}`")))
    };

    let mut nodes = Vec::with_capacity(doc.equipment.len());
    for e in &doc.equipment {
        let mut eq = e.normalise(doc.period_s)?;
        eq.feeds = e
            .feeds
            .iter()
            .map(|f| lookup(f, &format!("feed list of `{}`", e.id)))
            .collect::<Result<_>>()?;
        nodes.push(eq);
    }

    let sources: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == EquipmentKind::BaleInfeed).collect();
    if sources.len() != 1 {
        return Err(Error::Topology(format!("expected exactly one bale infeed, found {}", sources.len())));
    }
    for n in &nodes {
        match (n.kind, n.feeds.is_empty()) {
            (EquipmentKind::BaleInfeed, false) => {
                return Err(Error::Topology(format!("bale infeed `{}` cannot have upstream feeds", n.id)))
            }
            (k, true) if k != EquipmentKind::BaleInfeed => {
                return Err(Error::Topology(format!("`{}` has no upstream feed", n.id)))
            }
            _ => {}
        }
    }
    let order = topological_order(&nodes)?;

    let separation_feed = lookup(&doc.separation_feed, "separation_feed")?;
    let secondary_head = lookup(&doc.secondary_head, "secondary_head")?;
    let bypass_head = lookup(&doc.bypass_head, "bypass_head")?;
    let reactor_feed = lookup(&doc.reactor_feed, "reactor_feed")?;
    for head in [secondary_head, bypass_head] {
        if nodes[head.0].feeds != [separation_feed] {
            return Err(Error::Topology(format!(
                "branch head `{}` must be fed only by separation feed `{}`",
                nodes[head.0].id, doc.separation_feed
            )));
        }
        if nodes[head.0].kind != EquipmentKind::Transport {
            return Err(Error::Topology(format!("branch head `{}` must be a transport", nodes[head.0].id)));
        }
    }
    if secondary_head == bypass_head {
        return Err(Error::Topology("branch heads must be distinct".into()));
    }

    let graph = EquipmentGraph {
        nodes,
        source: NodeId(sources[0]),
        separation_feed,
        secondary_head,
        bypass_head,
        reactor_feed,
        bale_cross_section_m2: doc.bale_cross_section_in2 * IN2_TO_M2,
        order,
    };
    for name in &doc.failures.nodes {
        lookup(name, "failure node list")?;
    }
    let per_hr = 3600.0 / doc.period_s;
    let config = PlantConfig {
        period_s: doc.period_s,
        horizon: doc.horizon,
        reactor_capacity: doc.reactor_capacity_dt_per_hr * KG_PER_TON / per_hr,
        target_rate: doc.target_dt_per_hr * KG_PER_TON / per_hr,
        risk: doc.risk,
        saa_risk: doc.saa_risk,
        holding_cost_per_kg: doc.holding_cost_usd_per_ton / KG_PER_TON,
        holding_weight: doc.holding_weight,
        moisture_bands: doc.moisture_bands.map(|b| Interval { lo: b[0], hi: b[1] }),
        bale_density: doc.bale_density_kg_m3,
        screen_mm: doc.screen_mm,
        failures: doc.failures.clone(),
    };
    Ok(Plant { graph, config })
}

fn topological_order(nodes: &[Equipment]) -> Result<Vec<NodeId>> {
    let n = nodes.len();
    let mut indeg: Vec<usize> = nodes.iter().map(|e| e.feeds.len()).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in nodes.iter().enumerate() {
        for f in &e.feeds {
            succ[f.0].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeId(i));
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() < n {
        let stuck: Vec<&str> = (0..n).filter(|&i| indeg[i] > 0).map(|i| nodes[i].id.as_str()).collect();
        return Err(Error::Topology(format!("cycle through {}", stuck.join(", "))));
    }
    Ok(order)
}

pub fn load_plant(path: impl AsRef<Path>) -> Result<Plant> {
    let text = std::fs::read_to_string(path)?;
    build_plant(&PlantDocument::from_json(&text)?)
}

/// The canonical PDU plant.
pub fn pdu_plant() -> Plant {
    build_plant(&PlantDocument::from_json(PDU_JSON).expect("canonical plant parses"))
        .expect("canonical plant is valid")
}
