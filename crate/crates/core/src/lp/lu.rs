//! Sparse LU factorisation of a simplex basis.
//!
//! Right-looking Gaussian elimination with Markowitz pivot selection and
//! threshold partial pivoting. Basis columns are addressed by their basis
//! position, rows by constraint index. After elimination `E B = U` where `E`
//! is the product of the recorded row-elimination etas and `U` is upper
//! triangular under the pivot permutation.

use crate::scalar::Scalar;

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct LowerEta<T> {
    pivot_row: usize,
    entries: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
struct UpperRow<T> {
    pivot_row: usize,
    pivot_col: usize,
    diag: T,
    entries: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    m: usize,
    lower: Vec<LowerEta<T>>,
    upper: Vec<UpperRow<T>>,
}

/// Basis positions that could not be pivoted and the rows left uncovered.
#[derive(Debug, Clone)]
pub struct Singular {
    pub bad_positions: Vec<usize>,
    pub free_rows: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    /// Factorise the `m x m` matrix whose column `k` is `columns[k]` (row, value) pairs.
    pub fn factorize(m: usize, columns: &[Vec<(usize, T)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                if v != T::zero() {
                    rows[i].push((k, v));
                    col_rows[k].push(i);
                }
            }
        }
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut col_count: Vec<usize> = col_rows.iter().map(|c| c.len()).collect();
        let mut lower = Vec::new();
        let mut upper = Vec::with_capacity(m);
        let mut scatter: Vec<usize> = vec![usize::MAX; m];
        let threshold = T::lit(PIVOT_THRESHOLD);
        let singular_tol = T::lit(SINGULAR_TOL);

        // Columns bucketed by count; entries go stale and are re-checked on pop.
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); m + 2];
        for k in 0..m {
            buckets[col_count[k].min(m + 1)].push(k);
        }
        let mut min_bucket = 0usize;

        for _step in 0..m {
            // Find candidate columns with the smallest active count.
            let mut candidates: Vec<usize> = Vec::new();
            let mut cand_count = usize::MAX;
            while min_bucket <= m + 1 && candidates.len() < 4 {
                let mut kept = Vec::new();
                while let Some(k) = buckets[min_bucket].pop() {
                    if !col_active[k] || col_count[k].min(m + 1) != min_bucket {
                        continue;
                    }
                    if !candidates.contains(&k) {
                        cand_count = min_bucket;
                        candidates.push(k);
                    }
                    kept.push(k);
                    if candidates.len() >= 4 {
                        break;
                    }
                }
                buckets[min_bucket].extend(kept);
                if !candidates.is_empty() {
                    break;
                }
                min_bucket += 1;
            }
            if candidates.is_empty() {
                break;
            }
            if cand_count == 0 {
                break;
            }

            // Markowitz choice among candidate columns.
            let mut best: Option<(usize, usize, T, usize)> = None; // (row, col, value, cost)
            for &k in &candidates {
                let mut colmax = T::zero();
                for &i in &col_rows[k] {
                    if row_active[i] {
                        if let Some(&(_, v)) = rows[i].iter().find(|e| e.0 == k) {
                            colmax = colmax.max(v.abs());
                        }
                    }
                }
                if colmax <= singular_tol {
                    continue;
                }
                for &i in &col_rows[k] {
                    if !row_active[i] {
                        continue;
                    }
                    let v = match rows[i].iter().find(|e| e.0 == k) {
                        Some(&(_, v)) => v,
                        None => continue,
                    };
                    if v.abs() < threshold * colmax {
                        continue;
                    }
                    let cost = (rows[i].len() - 1) * (col_count[k] - 1);
                    let better = match best {
                        None => true,
                        Some((_, _, bv, bc)) => cost < bc || (cost == bc && v.abs() > bv.abs()),
                    };
                    if better {
                        best = Some((i, k, v, cost));
                    }
                }
            }
            let (p, c, piv) = match best {
                Some((i, k, v, _)) => (i, k, v),
                None => {
                    // All candidate columns numerically empty: mark them inactive as bad.
                    for &k in &candidates {
                        col_active[k] = false;
                    }
                    continue;
                }
            };

            // Eliminate column c from the other active rows.
            let prow: Vec<(usize, T)> = rows[p].iter().copied().filter(|e| e.0 != c).collect();
            let mut eta = Vec::new();
            let col_list = std::mem::take(&mut col_rows[c]);
            for &i in &col_list {
                if i == p || !row_active[i] {
                    continue;
                }
                let pos = match rows[i].iter().position(|e| e.0 == c) {
                    Some(pos) => pos,
                    None => continue,
                };
                let a_ic = rows[i][pos].1;
                rows[i].swap_remove(pos);
                let mult = a_ic / piv;
                eta.push((i, mult));
                if prow.is_empty() {
                    continue;
                }
                for (idx, &(j, _)) in rows[i].iter().enumerate() {
                    scatter[j] = idx;
                }
                for &(j, v) in &prow {
                    let s = scatter[j];
                    if s != usize::MAX && s < rows[i].len() && rows[i][s].0 == j {
                        rows[i][s].1 -= mult * v;
                    } else {
                        rows[i].push((j, -mult * v));
                        col_rows[j].push(i);
                        col_count[j] += 1;
                        buckets[col_count[j].min(m + 1)].push(j);
                    }
                }
                for &(j, _) in rows[i].iter() {
                    scatter[j] = usize::MAX;
                }
            }
            col_rows[c] = col_list;
            if !eta.is_empty() {
                lower.push(LowerEta { pivot_row: p, entries: eta });
            }
            row_active[p] = false;
            col_active[c] = false;
            for &(j, _) in &prow {
                col_count[j] -= 1;
                let b = col_count[j].min(m + 1);
                buckets[b].push(j);
                if b < min_bucket {
                    min_bucket = b;
                }
            }
            upper.push(UpperRow {
                pivot_row: p,
                pivot_col: c,
                diag: piv,
                entries: prow,
            });
        }

        if upper.len() < m {
            let bad_positions: Vec<usize> = (0..m)
                .filter(|&k| !upper.iter().any(|u| u.pivot_col == k))
                .collect();
            let free_rows: Vec<usize> = (0..m).filter(|&i| row_active[i]).collect();
            return Err(Singular {
                bad_positions,
                free_rows,
            });
        }
        Ok(Self { m, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Solve `B x = b` in place: `b` indexed by row on entry, by basis position on exit.
    pub fn ftran(&self, b: &mut [T], work: &mut [T]) {
        for eta in &self.lower {
            let bp = b[eta.pivot_row];
            if bp != T::zero() {
                for &(i, l) in &eta.entries {
                    b[i] -= l * bp;
                }
            }
        }
        for u in self.upper.iter().rev() {
            let mut acc = b[u.pivot_row];
            for &(j, v) in &u.entries {
                acc -= v * work[j];
            }
            work[u.pivot_col] = acc / u.diag;
        }
        b.copy_from_slice(work);
    }

    /// Solve `y' B = c'` in place: `c` indexed by basis position on entry, by row on exit.
    pub fn btran(&self, c: &mut [T], work: &mut [T]) {
        for u in &self.upper {
            let wc = c[u.pivot_col];
            let z = wc / u.diag;
            work[u.pivot_row] = z;
            if z != T::zero() {
                for &(j, v) in &u.entries {
                    c[j] -= z * v;
                }
            }
        }
        for eta in self.lower.iter().rev() {
            let mut acc = work[eta.pivot_row];
            for &(i, l) in &eta.entries {
                acc -= l * work[i];
            }
            work[eta.pivot_row] = acc;
        }
        c.copy_from_slice(work);
    }

    pub fn nnz(&self) -> usize {
        self.lower.iter().map(|e| e.entries.len()).sum::<usize>()
            + self.upper.iter().map(|u| u.entries.len() + 1).sum::<usize>()
    }
}
