use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{load_plant, pdu_plant, MoistureLevel, Plant};
use crate::scenario::FailureMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    BaseCase,
    ReliabilitySweep,
    Sequencing,
    ShortFailures,
    LongFailures,
    StorageCapacity,
    ParticleSize,
    Stability,
    MvComparison,
}

impl Study {
    pub const ALL: [Study; 9] = [
        Study::BaseCase,
        Study::ReliabilitySweep,
        Study::Sequencing,
        Study::ShortFailures,
        Study::LongFailures,
        Study::StorageCapacity,
        Study::ParticleSize,
        Study::Stability,
        Study::MvComparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::BaseCase => "base_case",
            Study::ReliabilitySweep => "reliability_sweep",
            Study::Sequencing => "sequencing",
            Study::ShortFailures => "short_failures",
            Study::LongFailures => "long_failures",
            Study::StorageCapacity => "storage_capacity",
            Study::ParticleSize => "particle_size",
            Study::Stability => "stability",
            Study::MvComparison => "mv_comparison",
        }
    }

    pub fn parse(name: &str) -> Result<Study> {
        Study::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| spec_error("study", format!("unknown study `{name}`")))
    }
}

/// Replacements for a study's default grids. `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Reactor capacities in dry tons per hour.
    pub reactor_capacities: Option<Vec<f64>>,
    pub storage_scales: Option<Vec<f64>>,
    /// Shifts of the grinders' median particle size, mm.
    pub median_shifts: Option<Vec<f64>>,
    /// Shifts of the grinders' 90/10 percentile ratio.
    pub spread_shifts: Option<Vec<f64>>,
    pub moisture: Option<Vec<MoistureLevel>>,
    /// Required reliabilities for the sweep, as fractions.
    pub reliabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Plant document; the built-in PDU plant when absent.
    #[serde(default)]
    pub plant: Option<PathBuf>,
    pub study: Study,
    /// Training sample sizes. Every cell is solved once per entry.
    pub scenarios: Vec<usize>,
    pub seed: u64,
    /// Runs averaged per row (sequencing) or solved per sample size (stability).
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Periods; the plant's own horizon when absent.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// In-sample risk; the plant's value when absent.
    #[serde(default)]
    pub saa_risk: Option<f64>,
    /// Failure processes for studies that do not fix them.
    #[serde(default)]
    pub failures: Option<FailureMode>,
    #[serde(default = "default_oos")]
    pub oos_scenarios: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub overrides: Overrides,
}

fn default_replications() -> usize {
    10
}

fn default_oos() -> usize {
    10_000
}

pub(crate) fn spec_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Spec { field: field.into(), reason: reason.into() }
}

fn check_list(field: &str, values: &Option<Vec<f64>>, ok: impl Fn(f64) -> bool, must_hold: Option<f64>) -> Result<()> {
    let Some(v) = values else { return Ok(()) };
    if v.is_empty() {
        return Err(spec_error(field, "empty list"));
    }
    if let Some(bad) = v.iter().find(|&&x| !x.is_finite() || !ok(x)) {
        return Err(spec_error(field, format!("value {bad} out of range")));
    }
    if let Some(base) = must_hold {
        if !v.contains(&base) {
            return Err(spec_error(field, format!("must include the base value {base}")));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn new(study: Study, scenarios: Vec<usize>, seed: u64, output: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            plant: None,
            study,
            scenarios,
            seed,
            replications: default_replications(),
            horizon: None,
            saa_risk: None,
            failures: None,
            oos_scenarios: default_oos(),
            output: output.into(),
            overrides: Overrides::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(spec_error("scenarios", "at least one sample size is required"));
        }
        if self.scenarios.contains(&0) {
            return Err(spec_error("scenarios", "sample sizes must be positive"));
        }
        if self.replications == 0 {
            return Err(spec_error("replications", "must be positive"));
        }
        if self.horizon == Some(0) {
            return Err(spec_error("horizon", "must be positive"));
        }
        if self.oos_scenarios == 0 {
            return Err(spec_error("oos_scenarios", "must be positive"));
        }
        if let Some(r) = self.saa_risk {
            if !(0.0..1.0).contains(&r) {
                return Err(spec_error("saa_risk", format!("{r} not in [0, 1)")));
            }
        }
        let o = &self.overrides;
        check_list("overrides.reactor_capacities", &o.reactor_capacities, |x| x > 0.0, None)?;
        check_list("overrides.storage_scales", &o.storage_scales, |x| x > 0.0, Some(1.0))?;
        check_list("overrides.median_shifts", &o.median_shifts, |_| true, Some(0.0))?;
        check_list("overrides.spread_shifts", &o.spread_shifts, |_| true, Some(0.0))?;
        check_list("overrides.reliabilities", &o.reliabilities, |x| x > 0.0 && x <= 1.0, None)?;
        if o.moisture.as_ref().is_some_and(Vec::is_empty) {
            return Err(spec_error("overrides.moisture", "empty list"));
        }
        Ok(())
    }

    pub fn load_plant(&self) -> Result<Plant> {
        match &self.plant {
            Some(path) => load_plant(path),
            None => Ok(pdu_plant()),
        }
    }
}
