use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::plant::{FailureModel, MoistureLevel, NodeId, OutageParams, PerLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    #[default]
    None,
    Short,
    Long,
    Both,
}

impl FailureMode {
    fn short(self) -> bool {
        matches!(self, FailureMode::Short | FailureMode::Both)
    }

    fn long(self) -> bool {
        matches!(self, FailureMode::Long | FailureMode::Both)
    }
}

/// Outage intervals `(start, end)` in seconds of one alternating renewal process
/// over `[0, horizon_s)`. Parameters follow the moisture level at each failure onset.
pub fn outage_intervals(
    params: &PerLevel<OutageParams>,
    level_at: impl Fn(f64) -> MoistureLevel,
    horizon_s: f64,
    rng: &mut impl Rng,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        let p = params[level_at(t)];
        let up: f64 = Weibull::new(p.scale_s, p.shape).expect("valid weibull").sample(rng);
        t += up;
        if t >= horizon_s {
            break;
        }
        let q = params[level_at(t)];
        let down = if q.max_s > q.min_s { rng.gen_range(q.min_s..q.max_s) } else { q.min_s };
        out.push((t, t + down));
        t += down;
    }
    out
}

/// Per-period down indicator: the outages cover more than half the period.
fn down_periods(outages: &[(f64, f64)], periods: usize, period_s: f64) -> Vec<bool> {
    let mut covered = vec![0.0; periods];
    for &(a, b) in outages {
        let first = (a / period_s).floor() as usize;
        let last = ((b / period_s).ceil() as usize).min(periods);
        for (p, c) in covered.iter_mut().enumerate().take(last).skip(first) {
            let lo = a.max(p as f64 * period_s);
            let hi = b.min((p + 1) as f64 * period_s);
            if hi > lo {
                *c += hi - lo;
            }
        }
    }
    covered.iter().map(|&c| c > 0.5 * period_s).collect()
}

/// Operating indicators `[node][period]` for `node_count` nodes; only `failing` nodes
/// run renewal processes, every other node is always up.
pub fn generate_failure_schedule(
    levels: &[MoistureLevel],
    failing: &[NodeId],
    node_count: usize,
    model: &FailureModel,
    mode: FailureMode,
    period_s: f64,
    rng: &mut impl Rng,
) -> Vec<Vec<bool>> {
    let horizon = levels.len();
    let mut up = vec![vec![true; horizon]; node_count];
    if mode == FailureMode::None || horizon == 0 {
        return up;
    }
    let horizon_s = horizon as f64 * period_s;
    let level_at = |s: f64| levels[((s / period_s) as usize).min(horizon - 1)];
    for &n in failing {
        for (enabled, params) in [(mode.short(), &model.short), (mode.long(), &model.long)] {
            if !enabled {
                continue;
            }
            let outages = outage_intervals(params, level_at, horizon_s, rng);
            for (o, down) in up[n.0].iter_mut().zip(down_periods(&outages, horizon, period_s)) {
                *o &= !down;
            }
        }
    }
    up
}
