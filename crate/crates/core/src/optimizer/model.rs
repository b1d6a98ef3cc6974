//! Linear models of the feeding line: extensive form, scenario subproblems and mean value.

use crate::error::{Error, Result};
use crate::lp::{Column, LpModel, Sense, VarId};
use crate::plant::{EquipmentKind, NodeId, Plant};
use crate::scenario::{mean_scenario, BaleSequence, Scenario};

use super::layout::{FirstStage, Layout};

/// A row of one scenario block, split into second- and first-stage terms.
#[derive(Debug, Clone)]
pub struct CoupledRow {
    pub name: String,
    pub second: Vec<(usize, f64)>,
    pub first: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Recourse columns and rows for one scenario.
#[derive(Debug, Clone)]
pub struct Block {
    pub cols: Vec<Column<f64>>,
    pub col_names: Vec<String>,
    pub rows: Vec<CoupledRow>,
}

/// Objective knobs for a scenario block.
#[derive(Debug, Clone, Copy)]
pub struct BlockParams {
    /// Cost per unit of average-rate shortfall.
    pub penalty: f64,
    /// Probability weight of the scenario.
    pub weight: f64,
    /// Forbid any shortfall (mean-value model).
    pub hard_target: bool,
}

/// Gating factors: the source stops when anything upstream of storage is down,
/// the discharge stops when anything downstream is down.
fn gates(plant: &Plant, sc: &Scenario, t: usize) -> (f64, f64) {
    let g = &plant.graph;
    let upstream = g.upstream_of_storage();
    let storage = g.storage();
    let mut up = true;
    let mut down = true;
    for i in 0..g.len() {
        let ok = sc.operating[i][t];
        if storage.is_none() || upstream.contains(&NodeId(i)) {
            up &= ok;
        } else if Some(NodeId(i)) != storage {
            down &= ok;
        }
    }
    (f64::from(u8::from(up)), f64::from(u8::from(down)))
}

fn cap_or_inf(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Second-stage block of scenario `sc` (tagged `tag` in names).
pub fn scenario_block(
    plant: &Plant,
    layout: &Layout,
    seq: &BaleSequence,
    sc: &Scenario,
    params: BlockParams,
    tag: &str,
) -> Result<Block> {
    let g = &plant.graph;
    let cfg = &plant.config;
    let horizon = layout.horizon;
    if sc.horizon() != horizon || seq.len() != horizon {
        return Err(Error::Dimension(format!(
            "scenario horizon {} and sequence length {} must equal {horizon}",
            sc.horizon(),
            seq.len()
        )));
    }
    if sc.moisture.len() != layout.nodes {
        return Err(Error::Dimension("scenario node count differs from the plant".into()));
    }
    let k = g.reactor_feed;
    let mut cols = vec![Column { lower: 0.0, upper: f64::INFINITY, cost: 0.0 }; layout.second_len()];
    let mut col_names = vec![String::new(); layout.second_len()];
    let mut rows = Vec::new();

    for t in 0..horizon {
        let level = seq.levels[t];
        let (up_gate, down_gate) = gates(plant, sc, t);
        for &id in &g.order {
            let i = id.0;
            let node = g.node(id);
            let x = layout.flow(id, t);
            col_names[x] = format!("x{tag}_{i}_{t}");
            let m = sc.moisture_at(id, t);
            let d = sc.density_at(id, t);
            let infeed = node.infeed_cap[level];
            if infeed.is_finite() {
                cols[x].upper = infeed / (1.0 - m);
            }
            let inflow = |coef: f64| -> Vec<(usize, f64)> { node.feeds.iter().map(|f| (layout.flow(*f, t), -coef)).collect() };
            match node.kind {
                EquipmentKind::BaleInfeed => rows.push(CoupledRow {
                    name: format!("src{tag}_{t}"),
                    second: vec![(x, 1.0)],
                    first: vec![(layout.speed(id, t), -up_gate * g.bale_cross_section_m2 * sc.bale_density[t])],
                    sense: Sense::Eq,
                    rhs: 0.0,
                }),
                EquipmentKind::Grinder => {
                    let kept = 1.0 - node.dry_matter_loss - node.moisture_loss[level];
                    let mut second = vec![(x, 1.0)];
                    second.extend(inflow(kept));
                    rows.push(CoupledRow { name: format!("grd{tag}_{i}_{t}"), second, first: vec![], sense: Sense::Eq, rhs: 0.0 });
                }
                EquipmentKind::Transport => {
                    let share = if id == g.bypass_head {
                        sc.bypass[t]
                    } else if id == g.secondary_head {
                        1.0 - sc.bypass[t]
                    } else {
                        1.0
                    };
                    let mut second = vec![(x, 1.0)];
                    second.extend(inflow(share));
                    rows.push(CoupledRow { name: format!("trn{tag}_{i}_{t}"), second, first: vec![], sense: Sense::Eq, rhs: 0.0 });
                    let gate = f64::from(u8::from(sc.operating[i][t]));
                    rows.push(CoupledRow {
                        name: format!("cap{tag}_{i}_{t}"),
                        second: vec![(x, 1.0)],
                        first: vec![(layout.speed(id, t), -gate * node.cross_section_m2 * d)],
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
                EquipmentKind::Storage => {
                    let h = layout.holding_index(id).expect("storage holds inventory");
                    let inv = layout.held(h, t);
                    col_names[inv] = format!("inv{tag}_{i}_{t}");
                    cols[inv].lower = node.volume_floor_m3 * d;
                    cols[inv].upper = cap_or_inf(node.volume_cap_m3) * d;
                    rows.push(CoupledRow {
                        name: format!("dis{tag}_{i}_{t}"),
                        second: vec![(x, 1.0)],
                        first: vec![(layout.speed(id, t), -down_gate * node.cross_section_m2 * d)],
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                    let mut second = vec![(inv, 1.0), (x, 1.0)];
                    second.extend(inflow(1.0));
                    let mut first = vec![];
                    if t == 0 {
                        let s = layout.storage.iter().position(|&n| n == id).expect("storage listed");
                        first.push((layout.initial(s), -1.0));
                    } else {
                        second.push((layout.held(h, t - 1), -1.0));
                    }
                    rows.push(CoupledRow { name: format!("bal{tag}_{i}_{t}"), second, first, sense: Sense::Eq, rhs: 0.0 });
                }
                EquipmentKind::PelletMill => {
                    let h = layout.holding_index(id).expect("mill holds inventory");
                    let inv = layout.held(h, t);
                    col_names[inv] = format!("inv{tag}_{i}_{t}");
                    let d_in = node.feeds.first().map_or(d, |f| sc.density_at(*f, t));
                    cols[inv].upper = cap_or_inf(node.volume_cap_m3) * d_in;
                    let a = node.residence_periods;
                    let kept = 1.0 - node.moisture_loss[level];
                    let mut second = vec![(x, 1.0)];
                    second.extend(inflow(kept * (1.0 - a)));
                    if t > 0 {
                        second.push((layout.held(h, t - 1), -kept));
                    }
                    rows.push(CoupledRow { name: format!("mil{tag}_{i}_{t}"), second, first: vec![], sense: Sense::Eq, rhs: 0.0 });
                    let mut second = vec![(inv, 1.0)];
                    second.extend(inflow(a));
                    rows.push(CoupledRow { name: format!("hld{tag}_{i}_{t}"), second, first: vec![], sense: Sense::Eq, rhs: 0.0 });
                }
            }
        }
        let xk = layout.flow(k, t);
        let dry = 1.0 - sc.moisture_at(k, t);
        cols[xk].upper = cols[xk].upper.min(cfg.reactor_capacity / dry);
        cols[xk].cost = -params.weight * dry;
    }

    let (u, j) = (layout.shortfall(), layout.surplus());
    col_names[u] = format!("short{tag}");
    col_names[j] = format!("surplus{tag}");
    cols[u].cost = params.penalty;
    if params.hard_target {
        cols[u].upper = 0.0;
    }
    let mut second: Vec<(usize, f64)> = (0..horizon)
        .map(|t| (layout.flow(k, t), (1.0 - sc.moisture_at(k, t)) / horizon as f64))
        .collect();
    second.push((u, 1.0));
    second.push((j, -1.0));
    rows.push(CoupledRow { name: format!("tgt{tag}"), second, first: vec![], sense: Sense::Eq, rhs: cfg.target_rate });
    Ok(Block { cols, col_names, rows })
}

/// First-stage columns: speeds bounded per moisture level, starting inventory within storage volume.
pub fn first_stage_columns(plant: &Plant, layout: &Layout, seq: &BaleSequence, scenarios: &[Scenario]) -> (Vec<Column<f64>>, Vec<String>) {
    let g = &plant.graph;
    let mut cols = Vec::with_capacity(layout.first_len());
    let mut names = Vec::with_capacity(layout.first_len());
    for i in 0..layout.nodes {
        let node = g.node(NodeId(i));
        for t in 0..layout.horizon {
            let upper = if node.kind.has_speed() { node.speed_bound[seq.levels[t]] } else { 0.0 };
            cols.push(Column { lower: 0.0, upper, cost: 0.0 });
            names.push(format!("v_{i}_{t}"));
        }
    }
    let unit_cost = plant.config.holding_weight * plant.config.holding_cost_per_kg;
    for &s in &layout.storage {
        let node = g.node(s);
        let d = scenarios.iter().map(|sc| sc.density_at(s, 0)).fold(0.0, f64::max);
        cols.push(Column { lower: 0.0, upper: cap_or_inf(node.volume_cap_m3) * d, cost: unit_cost });
        names.push(format!("i0_{}", s.0));
    }
    (cols, names)
}

fn push_block(model: &mut LpModel<f64>, block: &Block, first: impl Fn(usize) -> usize) -> usize {
    let offset = model.num_cols();
    for (c, name) in block.cols.iter().zip(&block.col_names) {
        model.add_named_var(name.clone(), c.lower, c.upper, c.cost);
    }
    for r in &block.rows {
        let coeffs = r
            .second
            .iter()
            .map(|&(j, a)| (VarId(offset + j), a))
            .chain(r.first.iter().map(|&(j, a)| (VarId(first(j)), a)))
            .collect();
        model.add_named_row(r.name.clone(), coeffs, r.sense, r.rhs);
    }
    offset
}

/// Deterministic equivalent over a scenario sample.
#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    pub model: LpModel<f64>,
    pub layout: Layout,
    /// Column offset of each scenario block.
    pub offsets: Vec<usize>,
}

impl ExtensiveForm {
    pub fn first_stage(&self, x: &[f64]) -> Result<FirstStage> {
        FirstStage::from_vec(&self.layout, &x[..self.layout.first_len()])
    }

    pub fn block_values<'a>(&self, x: &'a [f64], s: usize) -> &'a [f64] {
        &x[self.offsets[s]..self.offsets[s] + self.layout.second_len()]
    }
}

pub fn build_extensive_form(plant: &Plant, seq: &BaleSequence, scenarios: &[Scenario], penalty: f64) -> Result<ExtensiveForm> {
    if scenarios.is_empty() {
        return Err(Error::Model("extensive form needs at least one scenario".into()));
    }
    let layout = Layout::new(plant, seq.len());
    let mut model = LpModel::new();
    let (cols, names) = first_stage_columns(plant, &layout, seq, scenarios);
    for (c, n) in cols.into_iter().zip(names) {
        model.add_named_var(n, c.lower, c.upper, c.cost);
    }
    let params = BlockParams { penalty, weight: 1.0 / scenarios.len() as f64, hard_target: false };
    let mut offsets = Vec::with_capacity(scenarios.len());
    for (s, sc) in scenarios.iter().enumerate() {
        let block = scenario_block(plant, &layout, seq, sc, params, &format!("_s{s}"))?;
        offsets.push(push_block(&mut model, &block, |j| j));
    }
    Ok(ExtensiveForm { model, layout, offsets })
}

/// Deterministic model on the mean scenario with the target imposed as a hard constraint.
pub fn build_mean_value(plant: &Plant, seq: &BaleSequence) -> Result<ExtensiveForm> {
    let layout = Layout::new(plant, seq.len());
    let sc = mean_scenario(plant, seq)?;
    let mut model = LpModel::new();
    let (cols, names) = first_stage_columns(plant, &layout, seq, std::slice::from_ref(&sc));
    for (c, n) in cols.into_iter().zip(names) {
        model.add_named_var(n, c.lower, c.upper, c.cost);
    }
    let params = BlockParams { penalty: 0.0, weight: 1.0, hard_target: true };
    let block = scenario_block(plant, &layout, seq, &sc, params, "")?;
    let offset = push_block(&mut model, &block, |j| j);
    Ok(ExtensiveForm { model, layout, offsets: vec![offset] })
}

/// Recourse problem of one scenario with the first stage fixed; right-hand side `h - T z`.
pub fn build_subproblem(block: &Block, first: &[f64]) -> LpModel<f64> {
    let mut model = LpModel::new();
    for (c, name) in block.cols.iter().zip(&block.col_names) {
        model.add_named_var(name.clone(), c.lower, c.upper, c.cost);
    }
    for r in &block.rows {
        let coeffs = r.second.iter().map(|&(j, a)| (VarId(j), a)).collect();
        let shift: f64 = r.first.iter().map(|&(j, a)| a * first[j]).sum();
        model.add_named_row(r.name.clone(), coeffs, r.sense, r.rhs - shift);
    }
    model
}

/// Refresh the right-hand sides of a subproblem built from `block` for a new first stage.
pub fn update_rhs(model: &mut LpModel<f64>, block: &Block, first: &[f64]) {
    for (row, r) in model.rows.iter_mut().zip(&block.rows) {
        let shift: f64 = r.first.iter().map(|&(j, a)| a * first[j]).sum();
        row.rhs = r.rhs - shift;
    }
}
