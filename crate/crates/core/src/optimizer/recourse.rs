//! Recourse blocks whose equalities pin every flow once the first stage is fixed.
//!
//! Rows are processed in construction order. An equality whose leading
//! second-stage entry names a column not yet defined defines that column; the
//! remaining rows and the column bounds become explicit constraints on the first
//! stage, recovered by back substitution through the defining rows.

use crate::lp::Sense;

use super::model::Block;

/// `coeffs . z <= rhs` over first-stage columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Recourse {
    /// Defining row of each second-stage column, if any.
    def_row: Vec<Option<usize>>,
    /// Rows in definition order.
    defining: Vec<usize>,
    /// Rows that constrain already-defined columns.
    checks: Vec<usize>,
    /// The single equality linking the free columns (shortfall and surplus).
    target_row: Option<usize>,
}

/// A violated constraint found at a trial first stage.
#[derive(Debug, Clone)]
pub struct Violation {
    /// Identifies the row or bound within the block, shared across scenarios.
    pub key: usize,
    pub amount: f64,
    pub constraint: Projected,
}

impl Recourse {
    /// `None` when some row neither defines a fresh column nor only reads defined ones.
    pub fn analyse(block: &Block, free: &[usize]) -> Option<Self> {
        let n = block.cols.len();
        let mut def_row = vec![None; n];
        let mut defining = Vec::new();
        let mut checks = Vec::new();
        let mut target_row = None;
        for (i, r) in block.rows.iter().enumerate() {
            let undefined: Vec<usize> = r.second.iter().map(|e| e.0).filter(|&j| def_row[j].is_none()).collect();
            if undefined.is_empty() {
                checks.push(i);
                continue;
            }
            if undefined.iter().all(|j| free.contains(j)) {
                if target_row.is_some() || r.sense != Sense::Eq {
                    return None;
                }
                target_row = Some(i);
                continue;
            }
            let (lead, coef) = r.second[0];
            if r.sense != Sense::Eq || undefined != [lead] || coef == 0.0 {
                return None;
            }
            def_row[lead] = Some(i);
            defining.push(i);
        }
        let all_defined = (0..n).all(|j| def_row[j].is_some() || free.contains(&j));
        all_defined.then_some(Recourse { def_row, defining, checks, target_row })
    }

    /// Column values implied by `z`; free columns are left at zero.
    pub fn evaluate(&self, block: &Block, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; block.cols.len()];
        for &i in &self.defining {
            let r = &block.rows[i];
            let (lead, coef) = r.second[0];
            let mut v = r.rhs - r.first.iter().map(|&(j, a)| a * z[j]).sum::<f64>();
            v -= r.second[1..].iter().map(|&(j, a)| a * x[j]).sum::<f64>();
            x[lead] = v / coef;
        }
        x
    }

    /// Express `weights . x(z)` as `constant + coeffs . z`.
    pub fn project(&self, block: &Block, weights: &[(usize, f64)]) -> (f64, Vec<(usize, f64)>) {
        let mut a = vec![0.0; block.cols.len()];
        for &(j, w) in weights {
            a[j] += w;
        }
        let mut constant = 0.0;
        let mut grad: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for &i in self.defining.iter().rev() {
            let r = &block.rows[i];
            let (lead, coef) = r.second[0];
            let w = a[lead] / coef;
            if w == 0.0 {
                continue;
            }
            a[lead] = 0.0;
            for &(j, v) in &r.second[1..] {
                a[j] -= w * v;
            }
            constant += w * r.rhs;
            for &(j, v) in &r.first {
                *grad.entry(j).or_insert(0.0) -= w * v;
            }
        }
        (constant, grad.into_iter().filter(|e| e.1 != 0.0).collect())
    }

    /// The `limit` largest row or bound violations above `tol` at `z`, largest first.
    pub fn violations(&self, block: &Block, z: &[f64], x: &[f64], tol: f64, limit: usize) -> Vec<Violation> {
        let mut found: Vec<(usize, f64, Vec<(usize, f64)>, f64, Vec<(usize, f64)>)> = Vec::new();
        let rows = block.rows.len();
        for &i in &self.checks {
            let r = &block.rows[i];
            let act: f64 = r.second.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
                + r.first.iter().map(|&(j, a)| a * z[j]).sum::<f64>();
            let scale = 1.0 + r.rhs.abs();
            let (excess, sign) = match r.sense {
                Sense::Le => (act - r.rhs, 1.0),
                Sense::Ge => (r.rhs - act, -1.0),
                Sense::Eq if act > r.rhs => (act - r.rhs, 1.0),
                Sense::Eq => (r.rhs - act, -1.0),
            };
            if excess > tol * scale {
                let w: Vec<(usize, f64)> = r.second.iter().map(|&(j, a)| (j, sign * a)).collect();
                let f: Vec<(usize, f64)> = r.first.iter().map(|&(j, a)| (j, sign * a)).collect();
                found.push((i, excess, w, sign * r.rhs, f));
            }
        }
        for (j, c) in block.cols.iter().enumerate() {
            if self.def_row[j].is_none() {
                continue;
            }
            if x[j] > c.upper + tol * (1.0 + c.upper.abs()) {
                found.push((rows + 2 * j, x[j] - c.upper, vec![(j, 1.0)], c.upper, vec![]));
            } else if x[j] < c.lower - tol * (1.0 + c.lower.abs()) {
                found.push((rows + 2 * j + 1, c.lower - x[j], vec![(j, -1.0)], -c.lower, vec![]));
            }
        }
        found.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        found
            .into_iter()
            .take(limit)
            .map(|(key, amount, w, rhs, direct)| {
                let (constant, mut coeffs) = self.project(block, &w);
                for (j, a) in direct {
                    match coeffs.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += a,
                        None => coeffs.push((j, a)),
                    }
                }
                Violation { key, amount, constraint: Projected { coeffs, rhs: rhs - constant } }
            })
            .collect()
    }

    pub fn target_row(&self) -> Option<usize> {
        self.target_row
    }
}
