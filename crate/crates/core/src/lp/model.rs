use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Column<T> {
    pub lower: T,
    pub upper: T,
    pub cost: T,
}

#[derive(Debug, Clone)]
pub struct Row<T> {
    pub coeffs: Vec<(VarId, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// Sparse minimisation LP: `min c'x  s.t.  rows, lower <= x <= upper`.
#[derive(Debug, Clone, Default)]
pub struct LpModel<T> {
    pub cols: Vec<Column<T>>,
    pub rows: Vec<Row<T>>,
    pub col_names: Vec<String>,
    pub row_names: Vec<String>,
}

impl<T: Scalar> LpModel<T> {
    pub fn new() -> Self {
        Self {
            cols: Vec::new(),
            rows: Vec::new(),
            col_names: Vec::new(),
            row_names: Vec::new(),
        }
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lower: T, upper: T, cost: T) -> VarId {
        self.cols.push(Column { lower, upper, cost });
        VarId(self.cols.len() - 1)
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, lower: T, upper: T, cost: T) -> VarId {
        let id = self.add_var(lower, upper, cost);
        self.set_col_name(id, name);
        id
    }

    pub fn add_row(&mut self, coeffs: Vec<(VarId, T)>, sense: Sense, rhs: T) -> RowId {
        self.rows.push(Row { coeffs, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn add_named_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, T)>,
        sense: Sense,
        rhs: T,
    ) -> RowId {
        let id = self.add_row(coeffs, sense, rhs);
        if self.row_names.len() < self.rows.len() {
            self.row_names.resize(self.rows.len(), String::new());
        }
        self.row_names[id.0] = name.into();
        id
    }

    pub fn set_col_name(&mut self, id: VarId, name: impl Into<String>) {
        if self.col_names.len() < self.cols.len() {
            self.col_names.resize(self.cols.len(), String::new());
        }
        self.col_names[id.0] = name.into();
    }

    pub fn col_name(&self, j: usize) -> String {
        match self.col_names.get(j) {
            Some(n) if !n.is_empty() => n.clone(),
            _ => format!("C{j}"),
        }
    }

    pub fn row_name(&self, i: usize) -> String {
        match self.row_names.get(i) {
            Some(n) if !n.is_empty() => n.clone(),
            _ => format!("R{i}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cols.len();
        for (j, c) in self.cols.iter().enumerate() {
            if c.lower.is_nan() || c.upper.is_nan() || !c.cost.is_finite() {
                return Err(Error::Model(format!("column {j} has NaN bound or non-finite cost")));
            }
            if c.lower > c.upper {
                return Err(Error::Model(format!(
                    "column {j} has lower bound {} above upper bound {}",
                    c.lower, c.upper
                )));
            }
            if c.lower == T::infinity() || c.upper == T::neg_infinity() {
                return Err(Error::Model(format!("column {j} has an empty bound interval")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(Error::Model(format!("row {i} has non-finite right-hand side")));
            }
            for &(v, a) in &r.coeffs {
                if v.0 >= n {
                    return Err(Error::Model(format!("row {i} references unknown column {}", v.0)));
                }
                if !a.is_finite() {
                    return Err(Error::Model(format!("row {i} has non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Row activity `a_i' x` for every row.
    pub fn row_activity(&self, x: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().fold(T::zero(), |acc, &(v, a)| acc + a * x[v.0]))
            .collect()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.cols
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (c, &xj)| acc + c.cost * xj)
    }

    /// Largest bound or row violation of `x`.
    pub fn primal_residual(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (c, &xj) in self.cols.iter().zip(x) {
            worst = worst.max(c.lower - xj).max(xj - c.upper);
        }
        for (r, act) in self.rows.iter().zip(self.row_activity(x)) {
            let v = match r.sense {
                Sense::Le => act - r.rhs,
                Sense::Ge => r.rhs - act,
                Sense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}
