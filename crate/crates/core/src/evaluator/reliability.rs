//! Out-of-sample replay of a first stage over freshly drawn scenarios.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimizer::FirstStage;
use crate::plant::{NodeId, Plant};
use crate::scenario::{sample_scenario, BaleSequence, GenOptions};

use super::simulate::{forward_simulate, Trajectory, ViolationKind};

/// Dry kg per period by which a mean feed may fall short and still count as meeting the target.
pub const FEED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutOfSample {
    pub scenarios: usize,
    pub seed: u64,
    pub options: GenOptions,
}

/// Events summed over scenarios for one node and kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTotals {
    /// Scenarios with at least one event.
    pub scenarios: usize,
    pub events: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub scenarios: usize,
    pub met: usize,
    pub reliability: f64,
    /// Mean over scenarios of the mean dry feed per period (kg).
    pub mean_feed: f64,
    /// Scenarios with a bin floor or bin capacity event.
    pub bin_violations: usize,
    pub by_node: BTreeMap<(NodeId, ViolationKind), EventTotals>,
}

impl ReliabilityReport {
    pub fn bin_violation_rate(&self) -> f64 {
        self.bin_violations as f64 / self.scenarios.max(1) as f64
    }
}

/// Per-scenario summary kept while streaming so large samples stay small in memory.
struct Summary {
    met: bool,
    feed: f64,
    bin: bool,
    events: BTreeMap<(NodeId, ViolationKind), (usize, f64)>,
}

fn summarise(traj: &Trajectory, target: f64) -> Summary {
    let mut events = BTreeMap::new();
    for e in &traj.events {
        let entry = events.entry((e.node, e.kind)).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += e.magnitude;
    }
    Summary { met: traj.meets(target, FEED_TOL), feed: traj.mean_feed(), bin: traj.has_bin_violation(), events }
}

/// Replay `first` on `spec.scenarios` draws. Draws are generated one at a time and
/// reduced in index order, so the report does not depend on the thread count.
pub fn out_of_sample_reliability(plant: &Plant, seq: &BaleSequence, first: &FirstStage, spec: &OutOfSample) -> Result<ReliabilityReport> {
    let target = plant.config.target_rate;
    let summaries: Vec<Summary> = (0..spec.scenarios as u64)
        .into_par_iter()
        .map(|s| {
            let sc = sample_scenario(plant, seq, spec.seed, s, spec.options)?;
            Ok(summarise(&forward_simulate(plant, seq, first, &sc)?, target))
        })
        .collect::<Result<_>>()?;
    let mut report = ReliabilityReport {
        scenarios: spec.scenarios,
        met: 0,
        reliability: 0.0,
        mean_feed: 0.0,
        bin_violations: 0,
        by_node: BTreeMap::new(),
    };
    for s in &summaries {
        report.met += usize::from(s.met);
        report.bin_violations += usize::from(s.bin);
        report.mean_feed += s.feed;
        for (&key, &(count, mag)) in &s.events {
            let e = report.by_node.entry(key).or_default();
            e.scenarios += 1;
            e.events += count;
            e.magnitude += mag;
        }
    }
    if spec.scenarios > 0 {
        report.reliability = report.met as f64 / spec.scenarios as f64;
        report.mean_feed /= spec.scenarios as f64;
    }
    Ok(report)
}
