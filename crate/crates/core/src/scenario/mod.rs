//! Random plant conditions: bale sequences, moisture, densities, particle sizes,
//! separation split and equipment operating schedules.

mod csv;
mod failures;
mod generate;
mod kernels;
mod sequence;

use serde::{Deserialize, Serialize};

use crate::plant::{NodeId, PerLevel};
pub use crate::plant::MoistureLevel;

pub use self::csv::{read_scenarios_csv, write_scenarios_csv};
pub use failures::{generate_failure_schedule, outage_intervals, FailureMode};
pub use generate::{generate_scenario_set, mean_scenario, sample_scenario, scenario_rng, GenOptions};
pub use kernels::{bypass_ratio, density_regression, sample_bale_density, sample_moisture, sample_psd};
pub use sequence::{make_bale_sequence, Pattern, BALE_PERIODS, SHORT_BLOCK};

/// Particle size percentiles (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psd<T = f64> {
    pub p10: T,
    pub p50: T,
    pub p90: T,
}

/// Moisture level of the bale in process, per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaleSequence {
    pub levels: Vec<MoistureLevel>,
    pub pattern: Pattern,
    pub mix: PerLevel<f64>,
}

impl BaleSequence {
    pub fn uniform(level: MoistureLevel, horizon: usize) -> Self {
        let mut mix = PerLevel::uniform(0.0);
        mix[level] = 1.0;
        BaleSequence {
            levels: vec![level; horizon],
            pattern: Pattern::Uniform(level),
            mix,
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn symbols(&self) -> String {
        self.levels.iter().map(|l| l.symbol()).collect()
    }
}

/// One sample path over the horizon. Per-node vectors are indexed `[node][period]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bale_density: Vec<f64>,
    /// Moisture fraction of the stream leaving each node.
    pub moisture: Vec<Vec<f64>>,
    /// Bulk density (kg/m3) of the stream leaving each node.
    pub density: Vec<Vec<f64>>,
    /// Percentiles per period for grinders, empty for other nodes.
    pub psd: Vec<Vec<Psd>>,
    /// Share of the separated stream sent down the bypass branch.
    pub bypass: Vec<f64>,
    pub operating: Vec<Vec<bool>>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.bale_density.len()
    }

    /// Whether every node is running in period `t`.
    pub fn line_up(&self, t: usize) -> bool {
        self.operating.iter().all(|o| o[t])
    }

    pub fn moisture_at(&self, n: NodeId, t: usize) -> f64 {
        self.moisture[n.0][t]
    }

    pub fn density_at(&self, n: NodeId, t: usize) -> f64 {
        self.density[n.0][t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
    pub sequence: BaleSequence,
    pub options: GenOptions,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}
