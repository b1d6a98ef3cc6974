//! Bounded-variable revised simplex.
//!
//! Every row `a_i'x (sense) b_i` gets a logical column `s_i` so that
//! `A x + s = b`; the sense is carried by the bounds of `s_i`. A basis is a
//! choice of `m` columns among the `n + m` structural and logical ones. The
//! primal method runs a composite phase 1 (sum of infeasibilities) followed by
//! phase 2; a dual method is used when a warm-start basis is dual feasible but
//! primal infeasible, which is the usual situation after a right-hand side
//! change or after appending rows.

use super::lu::LuFactors;
use super::model::{LpModel, Sense};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub feas: T,
    pub opt: T,
    pub pivot: T,
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            feas: T::lit(1e-7),
            opt: T::lit(1e-7),
            pivot: T::lit(1e-9),
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column held at zero.
    Zero,
}

/// Status of every structural column followed by every row's logical column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub cols: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: Status,
    pub x: Vec<T>,
    /// `y = c_B' B^-1`; for a minimisation `<=` row the dual is non-positive.
    pub row_duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub basis: Option<Basis>,
    /// Phase-1 multipliers proving infeasibility, when `status == Infeasible`.
    pub farkas: Option<Vec<T>>,
    pub message: Option<String>,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Dual objective `b'y + sum_j d_j * bound_j` for the reported duals.
    pub fn dual_objective(&self, model: &LpModel<T>) -> T {
        let mut obj = T::zero();
        for (r, &y) in model.rows.iter().zip(&self.row_duals) {
            obj += r.rhs * y;
        }
        for ((c, &d), &x) in model.cols.iter().zip(&self.reduced_costs).zip(&self.x) {
            if d == T::zero() {
                continue;
            }
            // A nonzero reduced cost pins the column at the bound it sits on.
            let bound = if d > T::zero() && c.lower.is_finite() {
                c.lower
            } else if d < T::zero() && c.upper.is_finite() {
                c.upper
            } else {
                x
            };
            obj += d * bound;
        }
        obj
    }
}

/// Solve `model` from the all-logical basis.
pub fn solve_lp<T: Scalar>(model: &LpModel<T>, tol: &Tolerances<T>) -> LpSolution<T> {
    solve_lp_from(model, tol, None)
}

/// Solve `model`, optionally starting from a previous basis. Rows appended
/// since the basis was taken start with their logical column basic.
pub fn solve_lp_from<T: Scalar>(
    model: &LpModel<T>,
    tol: &Tolerances<T>,
    warm: Option<&Basis>,
) -> LpSolution<T> {
    if let Err(e) = model.validate() {
        return LpSolution {
            status: Status::IterationLimit,
            x: vec![T::zero(); model.num_cols()],
            row_duals: vec![T::zero(); model.num_rows()],
            reduced_costs: vec![T::zero(); model.num_cols()],
            objective: T::nan(),
            iterations: 0,
            basis: None,
            farkas: None,
            message: Some(e.to_string()),
        };
    }
    let mut s = Simplex::new(model, *tol);
    s.install_basis(warm);
    s.run()
}

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK_FOR_BLAND: usize = 40;

struct Eta<T> {
    pos: usize,
    pivot: T,
    entries: Vec<(usize, T)>,
}

struct Simplex<'a, T: Scalar> {
    model: &'a LpModel<T>,
    tol: Tolerances<T>,
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<T>,
    cost: Vec<T>,
    lo: Vec<T>,
    up: Vec<T>,
    rhs: Vec<T>,
    x: Vec<T>,
    basic: Vec<usize>,
    pos_of: Vec<usize>,
    lu: Option<LuFactors<T>>,
    etas: Vec<Eta<T>>,
    work: Vec<T>,
    work2: Vec<T>,
    iterations: usize,
    max_iter: usize,
    bland: bool,
    degenerate_streak: usize,
    /// Devex reference weights for primal pricing.
    weights: Vec<T>,
}

const NOT_BASIC: usize = usize::MAX;

impl<'a, T: Scalar> Simplex<'a, T> {
    fn new(model: &'a LpModel<T>, tol: Tolerances<T>) -> Self {
        let n = model.num_cols();
        let m = model.num_rows();
        let mut counts = vec![0usize; n];
        for r in &model.rows {
            for &(v, _) in &r.coeffs {
                counts[v.0] += 1;
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut col_idx = vec![0usize; nnz];
        let mut col_val = vec![T::zero(); nnz];
        let mut fill = col_start.clone();
        for (i, r) in model.rows.iter().enumerate() {
            for &(v, a) in &r.coeffs {
                col_idx[fill[v.0]] = i;
                col_val[fill[v.0]] = a;
                fill[v.0] += 1;
            }
        }
        let mut cost = Vec::with_capacity(n + m);
        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        for c in &model.cols {
            cost.push(c.cost);
            lo.push(c.lower);
            up.push(c.upper);
        }
        let mut rhs = Vec::with_capacity(m);
        for r in &model.rows {
            cost.push(T::zero());
            let (l, u) = match r.sense {
                Sense::Le => (T::zero(), T::infinity()),
                Sense::Ge => (T::neg_infinity(), T::zero()),
                Sense::Eq => (T::zero(), T::zero()),
            };
            lo.push(l);
            up.push(u);
            rhs.push(r.rhs);
        }
        let max_iter = tol.max_iter.unwrap_or(1000 + 20 * (n + m));
        Self {
            model,
            tol,
            n,
            m,
            col_start,
            col_idx,
            col_val,
            cost,
            lo,
            up,
            rhs,
            x: vec![T::zero(); n + m],
            basic: Vec::new(),
            pos_of: vec![NOT_BASIC; n + m],
            lu: None,
            etas: Vec::new(),
            work: vec![T::zero(); m],
            work2: vec![T::zero(); m],
            iterations: 0,
            max_iter,
            bland: false,
            degenerate_streak: 0,
            weights: vec![T::one(); n + m],
        }
    }

    fn column(&self, j: usize) -> Vec<(usize, T)> {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| (self.col_idx[k], self.col_val[k]))
                .collect()
        } else {
            vec![(j - self.n, T::one())]
        }
    }

    fn dot_column(&self, j: usize, y: &[T]) -> T {
        if j < self.n {
            let mut acc = T::zero();
            for k in self.col_start[j]..self.col_start[j + 1] {
                acc += self.col_val[k] * y[self.col_idx[k]];
            }
            acc
        } else {
            y[j - self.n]
        }
    }

    fn default_nonbasic_value(&self, j: usize) -> T {
        if self.lo[j].is_finite() {
            self.lo[j]
        } else if self.up[j].is_finite() {
            self.up[j]
        } else {
            T::zero()
        }
    }

    fn install_basis(&mut self, warm: Option<&Basis>) {
        let n = self.n;
        let m = self.m;
        let mut basic = Vec::with_capacity(m);
        match warm {
            Some(b) => {
                for j in 0..n + m {
                    let st = if j < n {
                        b.cols.get(j).copied().unwrap_or(VarStatus::AtLower)
                    } else {
                        b.rows.get(j - n).copied().unwrap_or(VarStatus::Basic)
                    };
                    self.x[j] = match st {
                        VarStatus::Basic => {
                            basic.push(j);
                            T::zero()
                        }
                        VarStatus::AtUpper if self.up[j].is_finite() => self.up[j],
                        VarStatus::AtLower if self.lo[j].is_finite() => self.lo[j],
                        _ => self.default_nonbasic_value(j),
                    };
                }
                if basic.len() > m {
                    // Too many basics: demote structurals first, keep logicals.
                    basic.sort_by_key(|&j| std::cmp::Reverse(j >= n));
                    for &j in &basic[m..] {
                        self.x[j] = self.default_nonbasic_value(j);
                    }
                    basic.truncate(m);
                }
            }
            None => {
                for j in 0..n {
                    self.x[j] = self.default_nonbasic_value(j);
                }
                basic.extend(n..n + m);
            }
        }
        self.basic = basic;
        if self.basic.len() < m {
            let covered: std::collections::HashSet<usize> = self.basic.iter().copied().collect();
            for i in 0..m {
                if self.basic.len() >= m {
                    break;
                }
                if !covered.contains(&(n + i)) {
                    self.basic.push(n + i);
                }
            }
        }
        for (p, &j) in self.basic.iter().enumerate() {
            self.pos_of[j] = p;
        }
        self.refactor();
    }

    /// Factorise the current basis, swapping in logical columns for singular parts.
    fn refactor(&mut self) {
        self.etas.clear();
        for _attempt in 0..4 {
            let cols: Vec<Vec<(usize, T)>> = self.basic.iter().map(|&j| self.column(j)).collect();
            match LuFactors::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    self.recompute_basic_values();
                    return;
                }
                Err(sing) => {
                    for (&p, &row) in sing.bad_positions.iter().zip(&sing.free_rows) {
                        let old = self.basic[p];
                        self.pos_of[old] = NOT_BASIC;
                        self.x[old] = self.default_nonbasic_value(old);
                        let new = self.n + row;
                        if self.pos_of[new] != NOT_BASIC {
                            continue;
                        }
                        self.basic[p] = new;
                        self.pos_of[new] = p;
                    }
                }
            }
        }
        // Fall back to the all-logical basis, which is always nonsingular.
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NOT_BASIC {
                self.pos_of[j] = NOT_BASIC;
                self.x[j] = self.default_nonbasic_value(j);
            }
        }
        self.basic = (self.n..self.n + self.m).collect();
        for (p, &j) in self.basic.iter().enumerate() {
            self.pos_of[j] = p;
        }
        let cols: Vec<Vec<(usize, T)>> = self.basic.iter().map(|&j| self.column(j)).collect();
        self.lu = Some(LuFactors::factorize(self.m, &cols).expect("identity basis"));
        self.recompute_basic_values();
    }

    fn ftran(&mut self, v: &mut [T]) {
        let lu = self.lu.as_ref().expect("factorised");
        lu.ftran(v, &mut self.work);
        for eta in &self.etas {
            let xr = v[eta.pos] / eta.pivot;
            v[eta.pos] = xr;
            if xr != T::zero() {
                for &(i, a) in &eta.entries {
                    v[i] -= a * xr;
                }
            }
        }
    }

    fn btran(&mut self, v: &mut [T]) {
        for eta in self.etas.iter().rev() {
            let mut acc = v[eta.pos];
            for &(i, a) in &eta.entries {
                acc -= a * v[i];
            }
            v[eta.pos] = acc / eta.pivot;
        }
        let lu = self.lu.as_ref().expect("factorised");
        lu.btran(v, &mut self.work2);
    }

    fn recompute_basic_values(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.n + self.m {
            if self.pos_of[j] == NOT_BASIC && self.x[j] != T::zero() {
                let xj = self.x[j];
                if j < self.n {
                    for k in self.col_start[j]..self.col_start[j + 1] {
                        r[self.col_idx[k]] -= self.col_val[k] * xj;
                    }
                } else {
                    r[j - self.n] -= xj;
                }
            }
        }
        self.ftran(&mut r);
        for (p, &j) in self.basic.iter().enumerate() {
            self.x[j] = r[p];
        }
    }

    fn infeasibility(&self, j: usize) -> T {
        let v = self.x[j];
        if v < self.lo[j] {
            self.lo[j] - v
        } else if v > self.up[j] {
            v - self.up[j]
        } else {
            T::zero()
        }
    }

    fn primal_infeasible(&self) -> bool {
        self.basic.iter().any(|&j| self.infeasibility(j) > self.tol.feas)
    }

    fn duals_for(&mut self, costs_b: Vec<T>) -> Vec<T> {
        let mut y = costs_b;
        self.btran(&mut y);
        y
    }

    fn phase_costs(&self, phase_one: bool) -> Vec<T> {
        self.basic
            .iter()
            .map(|&j| {
                if phase_one {
                    let v = self.x[j];
                    if v < self.lo[j] - self.tol.feas {
                        -T::one()
                    } else if v > self.up[j] + self.tol.feas {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    self.cost[j]
                }
            })
            .collect()
    }

    fn dual_tol(&self, y: &[T]) -> T {
        let ymax = y.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        self.tol.opt.max(ymax * T::lit(1e-13))
    }

    /// Choose an entering column: (index, direction +1/-1, reduced cost).
    fn price(&self, y: &[T], phase_one: bool) -> Option<(usize, T, T)> {
        let dtol = self.dual_tol(y);
        let mut best: Option<(usize, T, T)> = None;
        let mut best_score = T::zero();
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NOT_BASIC || self.lo[j] == self.up[j] {
                continue;
            }
            let c = if phase_one { T::zero() } else { self.cost[j] };
            let d = c - self.dot_column(j, y);
            let xj = self.x[j];
            let can_up = xj < self.up[j];
            let can_down = xj > self.lo[j];
            let dir = if d < -dtol && can_up {
                T::one()
            } else if d > dtol && can_down {
                -T::one()
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir, d));
            }
            let score = d * d / self.weights[j];
            if score > best_score {
                best_score = score;
                best = Some((j, dir, d));
            }
        }
        best
    }

    fn pivot_in(&mut self, q: usize, r: usize, alpha: &[T]) {
        let leaving = self.basic[r];
        self.pos_of[leaving] = NOT_BASIC;
        self.basic[r] = q;
        self.pos_of[q] = r;
        let entries: Vec<(usize, T)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != r && a != T::zero())
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos: r,
            pivot: alpha[r],
            entries,
        });
        if self.etas.len() >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// One primal iteration. Returns Ok(true) when no improving column exists.
    fn primal_step(&mut self, phase_one: bool) -> Result<bool, Status> {
        let cb = self.phase_costs(phase_one);
        let y = self.duals_for(cb);
        let (q, dir, _d) = match self.price(&y, phase_one) {
            Some(e) => e,
            None => return Ok(true),
        };
        let mut alpha = self.column_dense(q);
        self.ftran(&mut alpha);

        // Harris two-pass ratio test on x_B(t) = x_B - dir * t * alpha.
        let feas = self.tol.feas;
        let piv = self.tol.pivot;
        let mut t_relaxed = T::infinity();
        for (p, &j) in self.basic.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= piv {
                continue;
            }
            let rate = -dir * a;
            let v = self.x[j];
            let lim = self.step_limit(j, v, rate, phase_one, feas);
            if lim < t_relaxed {
                t_relaxed = lim;
            }
        }
        let range = self.up[q] - self.lo[q];
        let mut leave: Option<usize> = None;
        let mut t = T::infinity();
        if t_relaxed.is_finite() {
            let mut best_a = T::zero();
            for (p, &j) in self.basic.iter().enumerate() {
                let a = alpha[p];
                if a.abs() <= piv {
                    continue;
                }
                let rate = -dir * a;
                let v = self.x[j];
                let lim = self.step_limit(j, v, rate, phase_one, T::zero());
                if lim <= t_relaxed {
                    let better = if self.bland {
                        leave.map_or(true, |lp: usize| j < self.basic[lp])
                    } else {
                        a.abs() > best_a
                    };
                    if better {
                        best_a = a.abs();
                        leave = Some(p);
                        t = lim.max(T::zero());
                    }
                }
            }
        }
        if range.is_finite() && range <= t {
            // Bound flip of the entering column.
            self.apply_step(q, dir, range, &alpha);
            self.x[q] = if dir > T::zero() { self.up[q] } else { self.lo[q] };
            self.note_progress(range);
            return Ok(false);
        }
        let r = match leave {
            Some(r) => r,
            None => {
                return if phase_one {
                    Err(Status::IterationLimit)
                } else {
                    Err(Status::Unbounded)
                }
            }
        };
        let leaving = self.basic[r];
        let rate = -dir * alpha[r];
        let target = self.leaving_bound(leaving, rate, phase_one);
        self.update_weights(q, r, &alpha);
        self.apply_step(q, dir, t, &alpha);
        // Snap the leaving column onto the bound it reached.
        self.x[leaving] = target;
        self.note_progress(t);
        self.pivot_in(q, r, &alpha);
        Ok(false)
    }

    /// Devex update for `q` entering at basis position `r`.
    fn update_weights(&mut self, q: usize, r: usize, alpha: &[T]) {
        let mut rho = vec![T::zero(); self.m];
        rho[r] = T::one();
        self.btran(&mut rho);
        let pivot = alpha[r];
        let wq = self.weights[q];
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NOT_BASIC || j == q || self.lo[j] == self.up[j] {
                continue;
            }
            let ratio = self.dot_column(j, &rho) / pivot;
            if ratio != T::zero() {
                self.weights[j] = self.weights[j].max(ratio * ratio * wq);
            }
        }
        let leaving = self.basic[r];
        self.weights[leaving] = (wq / (pivot * pivot)).max(T::one());
        // Restart the reference framework once weights drift far from one.
        if self.weights[leaving] > T::lit(1e8) {
            self.weights.iter_mut().for_each(|w| *w = T::one());
        }
    }

    fn leaving_bound(&self, j: usize, rate: T, phase_one: bool) -> T {
        let v = self.x[j];
        if phase_one && v < self.lo[j] - self.tol.feas {
            return self.lo[j];
        }
        if phase_one && v > self.up[j] + self.tol.feas {
            return self.up[j];
        }
        if rate < T::zero() {
            self.lo[j]
        } else {
            self.up[j]
        }
    }

    fn step_limit(&self, j: usize, v: T, rate: T, phase_one: bool, slack: T) -> T {
        let lo = self.lo[j];
        let up = self.up[j];
        if phase_one && v < lo - self.tol.feas {
            // Infeasible below: limited only when rising, stops on reaching the lower bound.
            return if rate > T::zero() { (lo - v + slack) / rate } else { T::infinity() };
        }
        if phase_one && v > up + self.tol.feas {
            return if rate < T::zero() { (v - up + slack) / -rate } else { T::infinity() };
        }
        if rate < T::zero() {
            if lo.is_finite() {
                ((v - lo).max(T::zero()) + slack) / -rate
            } else {
                T::infinity()
            }
        } else if up.is_finite() {
            ((up - v).max(T::zero()) + slack) / rate
        } else {
            T::infinity()
        }
    }

    fn apply_step(&mut self, q: usize, dir: T, t: T, alpha: &[T]) {
        if t == T::zero() {
            return;
        }
        for (p, &j) in self.basic.iter().enumerate() {
            let a = alpha[p];
            if a != T::zero() {
                self.x[j] -= dir * t * a;
            }
        }
        self.x[q] += dir * t;
    }

    fn note_progress(&mut self, t: T) {
        self.iterations += 1;
        if t <= T::lit(1e-12) {
            self.degenerate_streak += 1;
            if self.degenerate_streak > DEGENERATE_STREAK_FOR_BLAND {
                self.bland = true;
            }
        } else {
            self.degenerate_streak = 0;
            self.bland = false;
        }
    }

    fn column_dense(&self, j: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.m];
        for (i, a) in self.column(j) {
            v[i] = a;
        }
        v
    }

    fn reduced_costs_ok(&mut self) -> bool {
        let cb = self.phase_costs(false);
        let y = self.duals_for(cb);
        self.price(&y, false).is_none()
    }

    /// One dual simplex iteration. Ok(true) when primal feasible.
    fn dual_step(&mut self) -> Result<bool, Status> {
        let feas = self.tol.feas;
        let mut leave: Option<(usize, T)> = None;
        let mut worst = feas;
        for (p, &j) in self.basic.iter().enumerate() {
            let inf = self.infeasibility(j);
            if inf > worst {
                worst = inf;
                leave = Some((p, if self.x[j] < self.lo[j] { self.lo[j] } else { self.up[j] }));
            }
        }
        let (r, target) = match leave {
            Some(l) => l,
            None => return Ok(true),
        };
        let leaving = self.basic[r];
        let increase = self.x[leaving] < target;
        let cb = self.phase_costs(false);
        let y = self.duals_for(cb);
        let mut rho = vec![T::zero(); self.m];
        rho[r] = T::one();
        self.btran(&mut rho);
        let piv = self.tol.pivot;
        let dtol = self.dual_tol(&y);
        // x_r moves by -alpha_rj * dx_j; pick j whose move pushes x_r toward target.
        let feas = self.tol.feas;
        let mut cands: Vec<(usize, T, T)> = Vec::new();
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NOT_BASIC || self.lo[j] == self.up[j] {
                continue;
            }
            let a = self.dot_column(j, &rho);
            if a.abs() <= piv {
                continue;
            }
            let xj = self.x[j];
            let can_up = xj < self.up[j];
            let can_down = xj > self.lo[j];
            // Needed sign of dx_j so that -a * dx_j has the sign of the required change.
            let want_up = if increase { a < T::zero() } else { a > T::zero() };
            if (want_up && !can_up) || (!want_up && !can_down) {
                continue;
            }
            let d = self.cost[j] - self.dot_column(j, &y);
            // Signed: a slightly wrong-signed reduced cost must block the step.
            let dd = if want_up { d } else { -d };
            cands.push((j, a, dd));
        }
        // Bound-flipping ratio test: pass breakpoints of boxed columns while the
        // leaving row stays infeasible after flipping them.
        let bland = self.bland;
        let mut order: Vec<(usize, T, T)> = cands;
        order.sort_by(|x, y| {
            let rx = x.2.max(T::zero()) / x.1.abs();
            let ry = y.2.max(T::zero()) / y.1.abs();
            rx.partial_cmp(&ry)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| if bland { x.0.cmp(&y.0) } else { y.1.abs().partial_cmp(&x.1.abs()).unwrap_or(std::cmp::Ordering::Equal) })
        });
        let mut remaining = (self.x[leaving] - target).abs();
        let mut flips: Vec<usize> = Vec::new();
        let mut chosen: Option<(usize, T)> = None;
        for (k, &(j, a, dd)) in order.iter().enumerate() {
            let range = self.up[j] - self.lo[j];
            if range.is_finite() && remaining - a.abs() * range > feas {
                remaining -= a.abs() * range;
                flips.push(j);
                continue;
            }
            // Harris pass over the remaining breakpoints: keep every skipped reduced
            // cost within tolerance and take the largest pivot below that bound.
            let ratio = dd.max(T::zero()) / a.abs();
            let mut pick = (j, ratio, a.abs());
            if !bland {
                let bound = order[k..]
                    .iter()
                    .fold(T::infinity(), |b, &(_, a2, dd2)| b.min(((dd2 + dtol) / a2.abs()).max(T::zero())));
                for &(j2, a2, dd2) in &order[k + 1..] {
                    let r2 = dd2.max(T::zero()) / a2.abs();
                    if r2 > bound {
                        break;
                    }
                    if a2.abs() > pick.2 {
                        pick = (j2, r2, a2.abs());
                    }
                }
            }
            chosen = Some((pick.0, pick.1));
            break;
        }
        let (q, step) = match chosen {
            Some(c) => c,
            None => return Err(Status::Infeasible),
        };
        // A wrong-signed entering reduced cost would turn the dual step negative and
        // push every other reduced cost the wrong way; shift its cost to zero it.
        // The dual pass restores the original costs when it ends.
        let dq = self.cost[q] - self.dot_column(q, &y);
        let at_lower = self.x[q] <= self.lo[q];
        if (at_lower && dq < T::zero()) || (!at_lower && dq > T::zero()) {
            self.cost[q] -= dq;
        }
        if !flips.is_empty() {
            let mut w = vec![T::zero(); self.m];
            for &j in &flips {
                let to = if self.x[j] <= self.lo[j] { self.up[j] } else { self.lo[j] };
                let delta = to - self.x[j];
                self.x[j] = to;
                for (i, v) in self.column(j) {
                    w[i] += v * delta;
                }
            }
            self.ftran(&mut w);
            for (p, &j) in self.basic.iter().enumerate() {
                self.x[j] -= w[p];
            }
        }
        let mut alpha = self.column_dense(q);
        self.ftran(&mut alpha);
        if alpha[r].abs() <= piv {
            return Err(Status::IterationLimit);
        }
        let dxq = (self.x[leaving] - target) / alpha[r];
        for (p, &j) in self.basic.iter().enumerate() {
            let a = alpha[p];
            if a != T::zero() {
                self.x[j] -= a * dxq;
            }
        }
        self.x[q] += dxq;
        self.x[leaving] = target;
        self.note_progress(step);
        self.pivot_in(q, r, &alpha);
        Ok(false)
    }

    /// Push nonbasic costs away from dual degeneracy; returns the original costs.
    fn perturb_costs(&mut self) -> Vec<T> {
        let original = self.cost.clone();
        let scale = original.iter().fold(T::one(), |a, &c| a.max(c.abs()));
        let eps = T::lit(5e-7) * scale;
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NOT_BASIC || self.lo[j] == self.up[j] {
                continue;
            }
            // Deterministic spread in [0.5, 1.5).
            let h = (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            let spread = T::lit(0.5 + (h as f64) / ((1u64 << 53) as f64));
            let delta = eps * (T::one() + original[j].abs()) * spread;
            if self.x[j] <= self.lo[j] {
                self.cost[j] += delta;
            } else if self.x[j] >= self.up[j] {
                self.cost[j] -= delta;
            }
        }
        original
    }

    fn run(mut self) -> LpSolution<T> {
        // Dual simplex when the starting basis is dual feasible but not primal feasible.
        if self.primal_infeasible() && self.m > 0 && self.reduced_costs_ok() {
            let original = self.perturb_costs();
            // Budget for the dual pass; the primal phases take over from wherever it stops.
            let budget = self.iterations + self.max_iter / 4;
            loop {
                if self.iterations >= budget {
                    break;
                }
                match self.dual_step() {
                    Ok(true) => break,
                    Ok(false) => {}
                    Err(_) => break,
                }
            }
            self.cost = original;
            self.refactor();
        }

        let mut phase_one_rounds = 0;
        loop {
            if self.iterations >= self.max_iter {
                return self.finish(Status::IterationLimit, None);
            }
            if self.primal_infeasible() {
                phase_one_rounds += 1;
                loop {
                    if self.iterations >= self.max_iter {
                        return self.finish(Status::IterationLimit, None);
                    }
                    match self.primal_step(true) {
                        Ok(true) => break,
                        Ok(false) => {
                            if !self.primal_infeasible() {
                                break;
                            }
                        }
                        Err(st) => return self.finish(st, None),
                    }
                }
                if self.primal_infeasible() {
                    self.refactor();
                    if self.primal_infeasible() {
                        let cb = self.phase_costs(true);
                        let y = self.duals_for(cb);
                        if self.price(&y, true).is_none() || phase_one_rounds > 3 {
                            return self.finish(Status::Infeasible, Some(y));
                        }
                        continue;
                    }
                }
            }
            loop {
                if self.iterations >= self.max_iter {
                    return self.finish(Status::IterationLimit, None);
                }
                match self.primal_step(false) {
                    Ok(true) => break,
                    Ok(false) => {}
                    Err(st) => return self.finish(st, None),
                }
            }
            self.refactor();
            if self.primal_infeasible() {
                if phase_one_rounds > 6 {
                    return self.finish(Status::IterationLimit, None);
                }
                continue;
            }
            if self.reduced_costs_ok() {
                return self.finish(Status::Optimal, None);
            }
        }
    }

    fn finish(mut self, status: Status, farkas: Option<Vec<T>>) -> LpSolution<T> {
        let n = self.n;
        let cb = self.phase_costs(false);
        let y = if self.m > 0 { self.duals_for(cb) } else { Vec::new() };
        let reduced: Vec<T> = (0..n)
            .map(|j| {
                if self.pos_of[j] != NOT_BASIC {
                    T::zero()
                } else {
                    self.cost[j] - self.dot_column(j, &y)
                }
            })
            .collect();
        let x: Vec<T> = self.x[..n].to_vec();
        let objective = self.model.objective_value(&x);
        let status_of = |j: usize| -> VarStatus {
            if self.pos_of[j] != NOT_BASIC {
                VarStatus::Basic
            } else if self.x[j] == self.up[j] && self.up[j].is_finite() && self.lo[j] != self.up[j] {
                VarStatus::AtUpper
            } else if self.lo[j].is_finite() {
                VarStatus::AtLower
            } else if self.up[j].is_finite() {
                VarStatus::AtUpper
            } else {
                VarStatus::Zero
            }
        };
        let basis = Basis {
            cols: (0..n).map(status_of).collect(),
            rows: (n..n + self.m).map(status_of).collect(),
        };
        let message = match status {
            Status::IterationLimit => Some(format!(
                "stopped after {} iterations without a certified result",
                self.iterations
            )),
            _ => None,
        };
        LpSolution {
            status,
            x,
            row_duals: y,
            reduced_costs: reduced,
            objective,
            iterations: self.iterations,
            basis: Some(basis),
            farkas,
            message,
        }
    }
}
