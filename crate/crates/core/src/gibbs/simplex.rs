//! Dense two-phase simplex for small standard-form programs
//! `max cᵀx  s.t.  Ax = b, x ≥ 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// Objective row (reduced costs for maximization), length `cols + 1`.
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations with Bland's rule over the columns allowed by
    /// `allowed`. Returns false when the objective is unbounded.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            // `obj[j]` holds c_j − z_j; a positive entry improves the objective.
            let Some(col) = (0..self.cols).find(|&j| allowed(j) && self.obj[j] > EPS) else {
                return Ok(true);
            };
            let rhs = self.cols;
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in self.t.iter().enumerate() {
                if r[col] > EPS {
                    let ratio = r[rhs] / r[col];
                    best = match best {
                        Some((bi, br))
                            if br < ratio - EPS
                                || ((br - ratio).abs() <= EPS && self.basis[bi] < self.basis[i]) =>
                        {
                            Some((bi, br))
                        }
                        _ => Some((i, ratio)),
                    };
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return Ok(false),
            }
        }
        Err(Error::Solver("simplex pivot limit reached"))
    }
}

/// Solves `max cᵀx  s.t.  Ax = b, x ≥ 0` with `a` given row by row.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: row.len(),
        });
    }
    if a.iter().flatten().chain(b).chain(c).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite linear program data"));
    }

    // Phase one: artificial variables n..n+m, one per row, minimize their sum.
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; cols + 1];
        for (dst, &src) in r.iter_mut().zip(row) {
            *dst = sign * src;
        }
        r[n + i] = 1.0;
        r[cols] = sign * bi;
        t.push(r);
    }
    let mut obj = vec![0.0; cols + 1];
    for r in &t {
        for j in 0..n {
            obj[j] += r[j];
        }
        obj[cols] += r[cols];
    }
    let mut tab = Tableau {
        t,
        obj,
        basis: (n..n + m).collect(),
        cols,
    };
    tab.optimize(|_| true)?;
    let scale = 1.0 + b.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if tab.obj[cols] > 1e-9 * scale {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive remaining artificials out of the basis; rows where that is
    // impossible are redundant and dropped.
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.t[i][j].abs() > 1e-9) {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase two with the real objective, artificials frozen out.
    let mut obj = vec![0.0; cols + 1];
    obj[..n].copy_from_slice(c);
    for (r, &bj) in tab.t.iter().zip(&tab.basis) {
        let cb = c[bj];
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(r) {
                *o -= cb * v;
            }
        }
    }
    tab.obj = obj;
    if !tab.optimize(|j| j < n)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (r, &bj) in tab.t.iter().zip(&tab.basis) {
        x[bj] = r[cols].max(0.0);
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn textbook_program() {
        // max 3x + 5y  s.t.  x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 (slacks appended).
        let a = vec![
            vec![1.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 1.0, 0.0],
            vec![3.0, 2.0, 0.0, 0.0, 1.0],
        ];
        let out = solve(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0, 0.0, 0.0, 0.0]).unwrap();
        let LpOutcome::Optimal { x, value } = out else {
            panic!("expected optimum, got {out:?}")
        };
        assert!((value - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x + y = −1 with x, y ≥ 0.
        let out = solve(&[vec![1.0, 1.0]], &[-1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(out, LpOutcome::Infeasible);
        // x − y = 1, maximize x.
        let out = solve(&[vec![1.0, -1.0]], &[1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(out, LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let out = solve(&a, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(matches!(out, LpOutcome::Optimal { value, .. } if (value - 2.0).abs() < 1e-12));
    }
}
