use rand::Rng;
use rand_distr::{Distribution, Triangular as TriangularDist};

use super::Psd;
use crate::error::{Error, Result};
use crate::plant::{DensityModel, Interval, MoistureLevel, PerLevel, PsdRange, Triangular};
use crate::scalar::Scalar;

fn uniform(iv: Interval, rng: &mut impl Rng) -> f64 {
    if iv.hi > iv.lo {
        rng.gen_range(iv.lo..=iv.hi)
    } else {
        iv.lo
    }
}

/// Moisture fraction drawn uniformly from the level's band.
pub fn sample_moisture(bands: &PerLevel<Interval>, level: MoistureLevel, rng: &mut impl Rng) -> f64 {
    uniform(bands[level], rng)
}

pub fn sample_bale_density(tri: &Triangular, rng: &mut impl Rng) -> f64 {
    if tri.max <= tri.min {
        return tri.min;
    }
    TriangularDist::new(tri.min, tri.max, tri.mode)
        .expect("validated triangle")
        .sample(rng)
}

/// Percentiles with the median and the p90/p10 ratio drawn uniformly; the tails
/// are placed geometrically symmetric about the median.
pub fn sample_psd(table: &PerLevel<PsdRange>, level: MoistureLevel, rng: &mut impl Rng) -> Psd {
    let r = table[level];
    let p50 = uniform(r.median_mm, rng);
    let ratio = uniform(r.spread_ratio, rng);
    psd_from_ratio(p50, ratio)
}

pub(crate) fn psd_from_ratio(p50: f64, ratio: f64) -> Psd {
    let s = ratio.sqrt();
    Psd {
        p10: p50 / s,
        p50,
        p90: p50 * s,
    }
}

/// Bulk density after grinding. `noise` is the sampled error term (zero to disable).
pub fn density_regression<T: Scalar>(model: &DensityModel, moisture: T, psd: &Psd<T>, noise: T) -> Result<T> {
    if !(moisture >= T::zero() && moisture <= T::one()) {
        return Err(Error::Degenerate(format!("moisture {moisture} outside [0,1]")));
    }
    let mut d = T::lit(model.intercept) + T::lit(model.moisture) * moisture + T::lit(model.median) * psd.p50;
    if model.include_spread_ratio {
        d += T::lit(model.spread_ratio) * (psd.p90 / psd.p10);
    }
    d += noise;
    if !(d >= T::zero()) {
        return Err(Error::Degenerate(format!("regression density {d} is negative")));
    }
    Ok(d)
}

/// Share of material passing the separation screen untouched.
pub fn bypass_ratio<T: Scalar>(psd: &Psd<T>, screen_mm: T) -> Result<T> {
    if !(psd.p10 > T::zero() && psd.p10 <= psd.p50 && psd.p50 <= psd.p90) {
        return Err(Error::Degenerate(format!("percentiles {} <= {} <= {} must be positive and ordered", psd.p10, psd.p50, psd.p90)));
    }
    let half = T::lit(0.5);
    let slope = T::lit(0.4);
    if psd.p50 >= screen_mm {
        let span = psd.p50 - psd.p10;
        if span <= T::zero() {
            return Err(Error::Degenerate("p50 equals p10 above the screen size".into()));
        }
        Ok((half - slope * (psd.p50 - screen_mm) / span).max(T::zero()))
    } else {
        let span = psd.p90 - psd.p50;
        if span <= T::zero() {
            return Err(Error::Degenerate("p90 equals p50 below the screen size".into()));
        }
        Ok((half + slope * (screen_mm - psd.p50) / span).min(T::one()))
    }
}
