//! Dense two-phase simplex for small linear programs.
//!
//! Maximizes `c^T x` subject to linear rows and `x >= 0`. Pivoting follows
//! Bland's rule (lowest eligible column enters, lowest basic index leaves on
//! ratio ties), which cannot cycle and makes the returned vertex a pure
//! function of the input.

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-10;
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    /// Maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint, in the constraint's own orientation:
    /// `>= 0` for `Le` rows, `<= 0` for `Ge` rows, free for `Eq` rows.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m x (cols + 1), rhs last
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .basis
                .iter()
                .zip(&self.rows)
                .map(|(&b, row)| cost[b] * row[j])
                .sum::<f64>()
    }

    /// Runs simplex iterations maximizing `cost` over columns where
    /// `allowed[j]`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let entering =
                (0..self.cols).find(|&j| allowed[j] && self.reduced_cost(cost, j) > PIVOT_TOL);
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_TOL
                            || (ratio <= lr + PIVOT_TOL && self.basis[i] < self.basis[li])
                        {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Solves `A^T y = b` for square dense `A` by Gaussian elimination with
/// partial pivoting. `a` is row-major, `n x n`.
fn solve_transposed(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    // build A^T | b
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[j][i]).collect();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[p][col].abs() < PIVOT_TOL {
            return None;
        }
        m.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn constraint(mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        self.constraints
            .push(Constraint::new(coeffs, relation, rhs));
        self
    }

    pub fn solve(&self) -> Result<Outcome> {
        let n = self.objective.len();
        let m = self.constraints.len();
        if n == 0 {
            return Err(Error::arg("linear program has no variables"));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::arg(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("constraint {i} is not finite")));
            }
        }

        // normalize to rhs >= 0
        let mut flipped = vec![false; m];
        let mut rows: Vec<Constraint> = self.constraints.clone();
        for (i, c) in rows.iter_mut().enumerate() {
            if c.rhs < 0.0 {
                flipped[i] = true;
                c.rhs = -c.rhs;
                c.coeffs.iter_mut().for_each(|v| *v = -*v);
                c.relation = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        // column layout: structural | slack/surplus | artificial
        let n_slack = rows.iter().filter(|c| c.relation != Relation::Eq).count();
        let n_art = rows.iter().filter(|c| c.relation != Relation::Le).count();
        let cols = n + n_slack + n_art;
        let mut std_rows = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n, n + n_slack);
        for (i, c) in rows.iter().enumerate() {
            std_rows[i][..n].copy_from_slice(&c.coeffs);
            std_rows[i][cols] = c.rhs;
            match c.relation {
                Relation::Le => {
                    std_rows[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    std_rows[i][s] = -1.0;
                    s += 1;
                    std_rows[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    std_rows[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        let original = std_rows.clone();
        let is_art = |j: usize| j >= n + n_slack && j < cols;
        let mut tab = Tableau {
            rows: std_rows,
            basis,
            cols,
        };
        // original constraint index of each tableau row
        let mut live_rows: Vec<usize> = (0..m).collect();

        // phase 1: maximize -sum(artificials)
        if n_art > 0 {
            let cost: Vec<f64> = (0..cols)
                .map(|j| if is_art(j) { -1.0 } else { 0.0 })
                .collect();
            tab.optimize(&cost, &vec![true; cols]);
            let infeasibility: f64 = (0..m)
                .filter(|&i| is_art(tab.basis[i]))
                .map(|i| tab.rhs(i))
                .sum();
            if infeasibility > FEAS_TOL {
                return Ok(Outcome::Infeasible);
            }
            // drive zero-level artificials out of the basis
            let mut redundant = Vec::new();
            for i in 0..m {
                if !is_art(tab.basis[i]) {
                    continue;
                }
                match (0..n + n_slack).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                    Some(j) => tab.pivot(i, j),
                    None => redundant.push(i),
                }
            }
            for &i in redundant.iter().rev() {
                tab.rows.remove(i);
                tab.basis.remove(i);
                live_rows.remove(i);
            }
        }

        // phase 2
        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&self.objective);
        let allowed: Vec<bool> = (0..cols).map(|j| !is_art(j)).collect();
        if !tab.optimize(&cost, &allowed) {
            return Ok(Outcome::Unbounded);
        }

        let mut x = vec![0.0; n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                x[b] = tab.rhs(i).max(0.0);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

        // duals: B^T y = c_B over the surviving rows
        let bmat: Vec<Vec<f64>> = live_rows
            .iter()
            .map(|&i| tab.basis.iter().map(|&b| original[i][b]).collect())
            .collect();
        let cb: Vec<f64> = tab.basis.iter().map(|&b| cost[b]).collect();
        let y_live = solve_transposed(&bmat, &cb)
            .ok_or_else(|| Error::NumericDomain("singular optimal basis".into()))?;
        let mut duals = vec![0.0; m];
        for (&i, y) in live_rows.iter().zip(y_live) {
            duals[i] = if flipped[i] { -y } else { y };
        }
        Ok(Outcome::Optimal(Solution {
            x,
            objective,
            duals,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: Outcome) -> Solution {
        match o {
            Outcome::Optimal(s) => s,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram::new(vec![3.0, 5.0])
            .constraint(vec![1.0, 0.0], Relation::Le, 4.0)
            .constraint(vec![0.0, 2.0], Relation::Le, 12.0)
            .constraint(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = optimal(lp.solve().unwrap());
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective - 36.0).abs() < 1e-9);
        // known duals (0, 1.5, 1)
        assert!((s.duals[0]).abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9);
        assert!((s.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge() {
        // max x + 2y st x + y = 1, x >= 0.3 -> (0.3, 0.7)
        let lp = LinearProgram::new(vec![1.0, 2.0])
            .constraint(vec![1.0, 1.0], Relation::Eq, 1.0)
            .constraint(vec![1.0, 0.0], Relation::Ge, 0.3);
        let s = optimal(lp.solve().unwrap());
        assert!((s.x[0] - 0.3).abs() < 1e-9);
        assert!((s.objective - 1.7).abs() < 1e-9);
        assert!(s.duals[1] <= 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = LinearProgram::new(vec![1.0])
            .constraint(vec![1.0], Relation::Le, 1.0)
            .constraint(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap(), Outcome::Infeasible);
        let lp = LinearProgram::new(vec![1.0]).constraint(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap(), Outcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -2  <=>  x >= 2 ; min x == max -x
        let lp = LinearProgram::new(vec![-1.0]).constraint(vec![-1.0], Relation::Le, -2.0);
        let s = optimal(lp.solve().unwrap());
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equality_rows() {
        let lp = LinearProgram::new(vec![1.0, 1.0])
            .constraint(vec![1.0, 1.0], Relation::Eq, 1.0)
            .constraint(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = optimal(lp.solve().unwrap());
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_does_not_cycle() {
        // Beale's example, which cycles under the textbook largest-coefficient rule
        let lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0])
            .constraint(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .constraint(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .constraint(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = optimal(lp.solve().unwrap());
        assert!((s.objective - 0.05).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let lp = LinearProgram::new(vec![1.0, 1.0]).constraint(vec![1.0], Relation::Le, 1.0);
        assert!(lp.solve().is_err());
    }
}
