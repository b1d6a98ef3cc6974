//! Free-format MPS export for cross-checking against external solvers.

use std::fmt::Write as _;
use std::io::Write;

use super::model::{LpModel, Sense};
use crate::error::Result;
use crate::scalar::Scalar;

pub fn to_mps_string<T: Scalar>(model: &LpModel<T>, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {name}");
    out.push_str("ROWS\n N OBJ\n");
    for (i, r) in model.rows.iter().enumerate() {
        let s = match r.sense {
            Sense::Le => 'L',
            Sense::Eq => 'E',
            Sense::Ge => 'G',
        };
        let _ = writeln!(out, " {s} {}", model.row_name(i));
    }
    let mut by_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); model.num_cols()];
    for (i, r) in model.rows.iter().enumerate() {
        for &(v, a) in &r.coeffs {
            by_col[v.0].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter().enumerate() {
        let cname = model.col_name(j);
        let c = model.cols[j].cost;
        if c != T::zero() {
            let _ = writeln!(out, " {cname} OBJ {}", c.as_f64());
        }
        for &(i, a) in entries {
            let _ = writeln!(out, " {cname} {} {}", model.row_name(i), a.as_f64());
        }
        if c == T::zero() && entries.is_empty() {
            let _ = writeln!(out, " {cname} OBJ 0");
        }
    }
    out.push_str("RHS\n");
    for (i, r) in model.rows.iter().enumerate() {
        if r.rhs != T::zero() {
            let _ = writeln!(out, " RHS {} {}", model.row_name(i), r.rhs.as_f64());
        }
    }
    out.push_str("BOUNDS\n");
    for (j, c) in model.cols.iter().enumerate() {
        let n = model.col_name(j);
        let (lo, up) = (c.lower.as_f64(), c.upper.as_f64());
        if lo == up {
            let _ = writeln!(out, " FX BND {n} {lo}");
            continue;
        }
        match (lo.is_finite(), up.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR BND {n}");
            }
            (false, true) => {
                let _ = writeln!(out, " MI BND {n}");
                let _ = writeln!(out, " UP BND {n} {up}");
            }
            (true, _) => {
                if lo != 0.0 {
                    let _ = writeln!(out, " LO BND {n} {lo}");
                }
                if up.is_finite() {
                    let _ = writeln!(out, " UP BND {n} {up}");
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps<T: Scalar>(model: &LpModel<T>, name: &str, mut w: impl Write) -> Result<()> {
    w.write_all(to_mps_string(model, name).as_bytes())?;
    Ok(())
}
