use super::*;
use crate::error::Error;

fn doc() -> PlantDocument {
    PlantDocument::from_json(PDU_JSON).unwrap()
}

fn equipment<'a>(d: &'a mut PlantDocument, id: &str) -> &'a mut config::EquipmentDoc {
    d.equipment.iter_mut().find(|e| e.id == id).unwrap()
}

#[test]
fn pdu_grinder_two_high_energy() {
    let p = pdu_plant();
    let g2 = p.graph.node(p.graph.find("Grinder 2").unwrap());
    assert_eq!(g2.energy_cost_per_hr[MoistureLevel::High], 3.33);
    assert_eq!(p.graph.len(), 13);
}

#[test]
fn low_moisture_cost_totals() {
    let p = pdu_plant();
    let energy: f64 = p.graph.nodes.iter().map(|n| n.energy_cost_per_hr.low).sum();
    let fixed: f64 = p.graph.nodes.iter().map(|n| n.fixed_cost_per_hr.low).sum();
    // The printed entries sum to 8.68 and 104.99; the printed totals (8.67, 104.98)
    // differ only by the rounding of thirteen two-decimal entries.
    assert!((energy - 8.68).abs() < 1e-9, "{energy}");
    assert!((fixed - 104.99).abs() < 1e-9, "{fixed}");
    let rounding = 13.0 * 0.005;
    assert!((energy - 8.67).abs() <= rounding);
    assert!((fixed - 104.98).abs() <= rounding);
    let high: f64 = p.graph.nodes.iter().map(|n| n.energy_cost_per_hr.high).sum();
    assert!((high - 14.63).abs() < 1e-9);
}

fn same_4sig(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= 5e-5 * a.abs().max(b.abs())
}

#[test]
fn unit_round_trip_reproduces_tables() {
    let original = doc();
    let back = PlantDocument::from_plant(&build_plant(&original).unwrap(), &original.name);
    assert!(same_4sig(original.reactor_capacity_dt_per_hr, back.reactor_capacity_dt_per_hr));
    assert!(same_4sig(original.bale_cross_section_in2, back.bale_cross_section_in2));
    for (a, b) in original.equipment.iter().zip(&back.equipment) {
        let pairs = |x: Option<PerLevel<f64>>, y: Option<PerLevel<f64>>| match (x, y) {
            (Some(x), Some(y)) => MoistureLevel::ALL.iter().all(|&l| same_4sig(x[l], y[l])),
            (None, None) => true,
            _ => false,
        };
        assert!(pairs(a.energy_cost_usd_per_hr, b.energy_cost_usd_per_hr), "{}", a.id);
        assert!(pairs(a.fixed_cost_usd_per_hr, b.fixed_cost_usd_per_hr), "{}", a.id);
        assert!(pairs(a.speed_bound_in_per_min, b.speed_bound_in_per_min), "{}", a.id);
        assert!(pairs(a.moisture_loss_pct, b.moisture_loss_pct), "{}", a.id);
        assert!(pairs(a.infeed_cap_dt_per_hr, b.infeed_cap_dt_per_hr), "{}", a.id);
        assert_eq!(a.cross_section_in2.is_some(), b.cross_section_in2.is_some());
        if let (Some(x), Some(y)) = (a.cross_section_in2, b.cross_section_in2) {
            assert!(same_4sig(x, y));
        }
        assert_eq!(a.feeds, b.feeds);
    }
    // A second trip through the normaliser is a fixed point.
    let again = build_plant(&back).unwrap();
    assert_eq!(again.graph.order, build_plant(&original).unwrap().graph.order);
}

#[test]
fn infeed_cap_in_kg_per_period() {
    let p = pdu_plant();
    let g1 = p.graph.node(p.graph.find("Grinder 1").unwrap());
    // 5.23 dt/hr at one-minute periods.
    assert!((g1.infeed_cap.low - 5.23 * KG_PER_TON / 60.0).abs() < 1e-9);
    assert!((p.config.reactor_capacity - 2.7 * KG_PER_TON / 60.0).abs() < 1e-9);
}

#[test]
fn missing_field_is_named() {
    let mut d = doc();
    equipment(&mut d, "Grinder 1").infeed_cap_dt_per_hr = None;
    match build_plant(&d) {
        Err(Error::MissingField { node, field }) => {
            assert_eq!(node, "Grinder 1");
            assert_eq!(field, "infeed_cap_dt_per_hr");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn cycle_is_rejected() {
    let mut d = doc();
    equipment(&mut d, "Grinder 1").feeds.push("Drag chain conveyor-1".into());
    assert!(matches!(build_plant(&d), Err(Error::Topology(m)) if m.contains("cycle")));
}

#[test]
fn branch_heads_must_share_predecessor() {
    let mut d = doc();
    equipment(&mut d, "Screw conveyor-4").feeds = vec!["Grinder 1".into()];
    assert!(matches!(build_plant(&d), Err(Error::Topology(m)) if m.contains("branch head")));
}

#[test]
fn node_without_feed_is_rejected() {
    let mut d = doc();
    equipment(&mut d, "Screw conveyor-5").feeds.clear();
    assert!(matches!(build_plant(&d), Err(Error::Topology(m)) if m.contains("no upstream feed")));
}

#[test]
fn inverted_storage_bounds_rejected() {
    let mut d = doc();
    equipment(&mut d, "Metering bin").volume_floor_m3 = Some(60.0);
    assert!(matches!(build_plant(&d), Err(Error::Config(m)) if m.contains("floor")));
}

#[test]
fn pdu_topology_is_clean() {
    let p = pdu_plant();
    assert!(validate_topology(&p.graph).is_empty());
    let pos: Vec<usize> = {
        let mut v = vec![0; p.graph.len()];
        for (k, id) in p.graph.order.iter().enumerate() {
            v[id.0] = k;
        }
        v
    };
    for (i, n) in p.graph.nodes.iter().enumerate() {
        for f in &n.feeds {
            assert!(pos[f.0] < pos[i]);
        }
    }
    let names: Vec<&str> = p.graph.upstream_of_storage().iter().map(|&n| p.graph.node(n).id.as_str()).collect();
    assert!(names.contains(&"Grinder 1") && !names.contains(&"Pellet mill"));
}

#[test]
fn unreachable_reactor_feed_is_diagnosed() {
    let mut p = pdu_plant();
    // A transport fed by the mill, with the old reactor feed removed from the source's reach.
    let mill = p.graph.find("Pellet mill").unwrap();
    let sc5 = p.graph.find("Screw conveyor-5").unwrap();
    p.graph.nodes[mill.0].feeds = vec![p.graph.reactor_feed];
    p.graph.nodes[p.graph.reactor_feed.0].feeds = vec![mill];
    p.graph.nodes[sc5.0].feeds = vec![p.graph.find("Metering bin").unwrap()];
    let d = validate_topology(&p.graph);
    assert_eq!(d.iter().filter(|x| x.rule == "reachability").count(), 1, "{d:?}");
}

#[test]
fn second_storage_is_diagnosed() {
    let mut p = pdu_plant();
    let sc5 = p.graph.find("Screw conveyor-5").unwrap();
    p.graph.nodes[sc5.0].kind = EquipmentKind::Storage;
    let d = validate_topology(&p.graph);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].rule, "multiplicity");
}
