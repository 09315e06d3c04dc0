//! Small dense linear programs: two-phase tableau simplex with Bland's rule.
//!
//! Problems here have at most a few dozen columns, so a dense tableau is the
//! simplest thing that works. Bland's rule rules out cycling on the highly
//! degenerate programs produced by barycentric faces.

use crate::error::{Error, Result};

/// Pivot and optimality tolerance.
pub const LP_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Constraint { coeffs, rel, rhs }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, z: &mut [f64], r: usize, col: usize) {
        let p = self.rows[r][col];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
        let f = z[col];
        if f != 0.0 {
            z.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
        }
        self.basis[r] = col;
    }

    /// Objective row `z_j − c_j` for the current basis; last entry is the value.
    fn objective_row(&self, c: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..=self.ncols).map(|j| if j < self.ncols { -c[j] } else { 0.0 }).collect();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if c[b] != 0.0 {
                z.iter_mut().zip(row).for_each(|(v, r)| *v += c[b] * r);
            }
        }
        z
    }

    fn run(&mut self, z: &mut [f64], allowed: &[bool]) -> Result<()> {
        let rhs = self.ncols;
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..self.ncols).find(|&j| allowed[j] && z[j] < -LP_TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > LP_TOL {
                    let ratio = row[rhs] / row[col];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Lp("problem is unbounded".into()));
            };
            self.pivot(z, r, col);
        }
        Err(Error::Lp("pivot limit reached".into()))
    }
}

/// Maximize `c·x` subject to the constraints and `x ≥ 0`.
pub fn maximize(c: &[f64], constraints: &[Constraint]) -> Result<LpSolution> {
    let n = c.len();
    if constraints.iter().any(|k| k.coeffs.len() != n) {
        return Err(Error::Lp("constraint width does not match the objective".into()));
    }
    let m = constraints.len();
    let extra_slack = constraints.iter().filter(|k| k.rel != Relation::Eq).count();
    let extra_art = constraints
        .iter()
        .filter(|k| {
            let flipped = k.rhs < 0.0;
            match k.rel {
                Relation::Eq => true,
                Relation::Le => flipped,
                Relation::Ge => !flipped,
            }
        })
        .count();
    let ncols = n + extra_slack + extra_art;
    let mut rows = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0; m];
    let mut is_art = vec![false; ncols];
    let mut next_slack = n;
    let mut next_art = n + extra_slack;
    for (i, k) in constraints.iter().enumerate() {
        let sign = if k.rhs < 0.0 { -1.0 } else { 1.0 };
        let rel = match (k.rel, sign < 0.0) {
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (r, _) => r,
        };
        for j in 0..n {
            rows[i][j] = sign * k.coeffs[j];
        }
        rows[i][ncols] = sign * k.rhs;
        match rel {
            Relation::Le => {
                rows[i][next_slack] = 1.0;
                basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                rows[i][next_slack] = -1.0;
                next_slack += 1;
                rows[i][next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                rows[i][next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut t = Tableau { rows, basis, ncols };

    if extra_art > 0 {
        let c1: Vec<f64> = is_art.iter().map(|&a| if a { -1.0 } else { 0.0 }).collect();
        let mut z = t.objective_row(&c1);
        t.run(&mut z, &vec![true; ncols])?;
        let scale = 1.0 + constraints.iter().map(|k| k.rhs.abs()).fold(0.0, f64::max);
        if z[ncols] < -1e-9 * scale {
            return Err(Error::Lp("problem is infeasible".into()));
        }
        // drive remaining artificials out of the basis
        for r in 0..m {
            if is_art[t.basis[r]] {
                if let Some(col) = (0..ncols).find(|&j| !is_art[j] && t.rows[r][j].abs() > 1e-9) {
                    t.pivot(&mut z, r, col);
                }
            }
        }
    }

    let mut c2 = vec![0.0; ncols];
    c2[..n].copy_from_slice(c);
    let mut z = t.objective_row(&c2);
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    t.run(&mut z, &allowed)?;

    let mut x = vec![0.0; n];
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < n {
            x[b] = row[ncols].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution { value, x })
}
