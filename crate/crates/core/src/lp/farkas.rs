//! Infeasibility certificates.
//!
//! With a logical column per row the constraints read `A x + s = b` over a box.
//! Multipliers `y` prove infeasibility when `y'b` exceeds the largest value
//! `sum_j (y'a_j) z_j` can take over that box.

use super::model::{LpModel, Sense};
use super::simplex::{solve_lp, Status, Tolerances};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct FarkasCertificate<T> {
    /// Row multipliers, oriented so that `y'b` exceeds the box maximum.
    pub row_multipliers: Vec<T>,
    /// `y'b - max_box`, strictly positive for a valid certificate.
    pub margin: T,
}

impl<T: Scalar> FarkasCertificate<T> {
    /// Multipliers for the rows rewritten as `>=` rows (a `<=` row is negated).
    pub fn ge_multipliers(&self, model: &LpModel<T>) -> Vec<T> {
        model
            .rows
            .iter()
            .zip(&self.row_multipliers)
            .map(|(r, &y)| match r.sense {
                Sense::Le => -y,
                _ => y,
            })
            .collect()
    }
}

/// Largest value of `sum_j (y'a_j) z_j` over the structural and logical box.
/// Coefficients below `zero_tol` in magnitude are ignored.
pub fn box_maximum<T: Scalar>(model: &LpModel<T>, y: &[T], zero_tol: T) -> T {
    let mut coef = vec![T::zero(); model.num_cols()];
    for (r, &yi) in model.rows.iter().zip(y) {
        if yi == T::zero() {
            continue;
        }
        for &(v, a) in &r.coeffs {
            coef[v.0] += yi * a;
        }
    }
    let mut total = T::zero();
    for (c, &g) in model.cols.iter().zip(&coef) {
        total += box_term(g, c.lower, c.upper, zero_tol);
    }
    for (r, &yi) in model.rows.iter().zip(y) {
        let (lo, up) = match r.sense {
            Sense::Le => (T::zero(), T::infinity()),
            Sense::Ge => (T::neg_infinity(), T::zero()),
            Sense::Eq => (T::zero(), T::zero()),
        };
        total += box_term(yi, lo, up, zero_tol);
    }
    total
}

fn box_term<T: Scalar>(g: T, lo: T, up: T, zero_tol: T) -> T {
    if g.abs() <= zero_tol {
        T::zero()
    } else if g > T::zero() {
        if up.is_finite() {
            g * up
        } else {
            T::infinity()
        }
    } else if lo.is_finite() {
        g * lo
    } else {
        T::infinity()
    }
}

/// Check `y` (either orientation) and return the oriented certificate if valid.
pub fn verify_farkas<T: Scalar>(model: &LpModel<T>, y: &[T], zero_tol: T) -> Option<FarkasCertificate<T>> {
    if y.len() != model.num_rows() {
        return None;
    }
    let ymax = y.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    if ymax == T::zero() {
        return None;
    }
    // Scale to unit max-norm so the margin is comparable across instances.
    let scaled: Vec<T> = y.iter().map(|&v| v / ymax).collect();
    let neg: Vec<T> = scaled.iter().map(|&v| -v).collect();
    let rhs = |w: &[T]| {
        model
            .rows
            .iter()
            .zip(w)
            .fold(T::zero(), |acc, (r, &wi)| acc + r.rhs * wi)
    };
    let mut best: Option<FarkasCertificate<T>> = None;
    for cand in [scaled, neg] {
        let margin = rhs(&cand) - box_maximum(model, &cand, zero_tol);
        if margin > zero_tol && best.as_ref().map_or(true, |b| margin > b.margin) {
            best = Some(FarkasCertificate {
                row_multipliers: cand,
                margin,
            });
        }
    }
    best
}

/// Solve `model` and return a verified infeasibility certificate.
pub fn extract_farkas<T: Scalar>(model: &LpModel<T>, tol: &Tolerances<T>) -> Result<FarkasCertificate<T>> {
    let sol = solve_lp(model, tol);
    if sol.status != Status::Infeasible {
        return Err(Error::NotInfeasible(format!("solver status {:?}", sol.status)));
    }
    let y = sol
        .farkas
        .ok_or_else(|| Error::Solver("infeasible status without multipliers".into()))?;
    verify_farkas(model, &y, tol.feas)
        .ok_or_else(|| Error::Solver("phase-one multipliers failed certificate check".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::model::LpModel;

    #[test]
    fn contradictory_bounds_certificate() {
        let mut m = LpModel::new();
        let x = m.add_var(0.0, f64::INFINITY, 0.0);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 2.0);
        m.add_row(vec![(x, 1.0)], Sense::Le, 1.0);
        let cert = extract_farkas(&m, &Tolerances::default()).unwrap();
        let lam = cert.ge_multipliers(&m);
        assert!((lam[0] - 1.0).abs() < 1e-9 && (lam[1] - 1.0).abs() < 1e-9);
        // 1*(x >= 2) + 1*(-x >= -1) gives 0 >= 1.
        assert!((cert.margin - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feasible_model_is_rejected() {
        let mut m = LpModel::new();
        let x = m.add_var(0.0, 10.0, 1.0);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 1.0);
        assert!(matches!(
            extract_farkas(&m, &Tolerances::default()),
            Err(Error::NotInfeasible(_))
        ));
    }

    #[test]
    fn random_infeasible_instances_certify() {
        use rand::{Rng, SeedableRng};
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = LpModel::new();
            let v: Vec<_> = (0..5).map(|_| m.add_var(0.0, rng.gen_range(1.0..3.0), 0.0)).collect();
            let mut sum = vec![0.0; 5];
            for _ in 0..4 {
                let coeffs: Vec<_> = v.iter().map(|&x| (x, rng.gen_range(-1.0..1.0))).collect();
                for (k, &(_, a)) in coeffs.iter().enumerate() {
                    sum[k] += a;
                }
                let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Eq };
                let rhs = rng.gen_range(-1.0..1.0);
                m.add_row(coeffs, sense, rhs);
            }
            // Fifth row: the sum of the other rows pushed beyond any attainable value.
            let bound: f64 = v
                .iter()
                .zip(&sum)
                .map(|(&x, &s)| if s > 0.0 { s * m.cols[x.0].upper } else { 0.0 })
                .sum();
            m.add_row(v.iter().zip(&sum).map(|(&x, &s)| (x, s)).collect(), Sense::Ge, bound + 1.0);
            let cert = extract_farkas(&m, &Tolerances::default()).unwrap();
            if cert.margin > 0.0 {
                ok += 1;
            }
        }
        assert_eq!(ok, 100);
    }
}
