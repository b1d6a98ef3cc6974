//! Spread of optimal values across independent samples of the same size.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimizer::{bisection_search, BendersOptions, BisectionParams};
use crate::plant::Plant;
use crate::scenario::{generate_scenario_set, BaleSequence, GenOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub scenarios: usize,
    pub seeds: Vec<u64>,
    pub objectives: Vec<f64>,
    /// `(max - min) / min |value|` over the replications.
    pub spread: f64,
}

pub fn relative_spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = values.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if values.len() < 2 || hi == lo {
        0.0
    } else {
        (hi - lo) / scale
    }
}

/// Seed of replication `r` in a study seeded with `seed`.
pub fn replication_seed(seed: u64, scenarios: usize, r: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((scenarios as u64) << 20).wrapping_add(r as u64)
}

#[allow(clippy::too_many_arguments)]
pub fn stability_test(
    plant: &Plant,
    seq: &BaleSequence,
    grid: &[usize],
    replications: usize,
    seed: u64,
    options: GenOptions,
    params: &BisectionParams,
    solver: BendersOptions,
) -> Result<Vec<StabilityRow>> {
    grid.iter()
        .map(|&count| {
            let seeds: Vec<u64> = (0..replications).map(|r| replication_seed(seed, count, r)).collect();
            let objectives = seeds
                .iter()
                .map(|&s| {
                    let set = generate_scenario_set(plant, seq, count, s, options)?;
                    Ok(bisection_search(plant, seq, &set.scenarios, params, solver)?.objective)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(StabilityRow { scenarios: count, spread: relative_spread(&objectives), seeds, objectives })
        })
        .collect()
}
