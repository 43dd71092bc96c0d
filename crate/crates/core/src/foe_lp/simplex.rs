//! Dense revised simplex with an explicit basis inverse and Bland's rule.
//!
//! Solves `min cᵀx  s.t.  Ax = b, x ≥ 0` with `b ≥ 0`. Columns are stored
//! sparsely. Rows that carry a slack column with a `+1` entry start with
//! that slack basic; every other row gets an artificial variable, and
//! phase one minimizes their sum.

/// Column `j` of `A` as `(row, value)` pairs.
pub type SparseColumn = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub rows: usize,
    pub columns: Vec<SparseColumn>,
    pub costs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Per row, a column usable as the starting basic variable.
    pub initial_basic: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexError {
    Infeasible { residual: f64 },
    Unbounded { column: usize },
    IterationLimit,
    Singular,
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

struct State<'a> {
    lp: &'a LinearProgram,
    /// Original columns followed by one artificial per row lacking a start.
    n_structural: usize,
    artificial_row: Vec<usize>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
}

impl<'a> State<'a> {
    fn m(&self) -> usize {
        self.lp.rows
    }

    fn column(&self, j: usize) -> SparseColumn {
        if j < self.n_structural {
            self.lp.columns[j].clone()
        } else {
            vec![(self.artificial_row[j - self.n_structural], 1.0)]
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_structural
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let m = self.m();
        let mut out = vec![0.0; m];
        for &(r, a) in col {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.binv[i * m + r] * a;
            }
        }
        out
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m();
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let c = cost(bj);
            if c != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += c * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &[f64]) {
        let m = self.m();
        let piv = u[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        self.xb[r] /= piv;
        for i in 0..m {
            if i != r && u[i] != 0.0 {
                let f = u[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
                self.xb[i] -= f * self.xb[r];
            }
        }
        self.basis[r] = entering;
        self.pivots += 1;
        if self.pivots % REFACTOR_EVERY == 0 {
            // A failed refactorization keeps the product-form inverse.
            let _ = self.refactor();
        }
    }

    /// Rebuilds `B⁻¹` and `x_B` from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<(), SimplexError> {
        let m = self.m();
        let mut a = vec![0.0; m * m];
        for (c, &bj) in self.basis.iter().enumerate() {
            for (r, v) in self.column(bj) {
                a[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .unwrap();
            if a[p * m + c].abs() < 1e-13 {
                return Err(SimplexError::Singular);
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.xb = (0..m)
            .map(|i| (0..m).map(|k| self.binv[i * m + k] * self.lp.rhs[k]).sum())
            .collect();
        Ok(())
    }

    /// Runs Bland-rule pivots until optimal for `cost`.
    fn optimize(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        allow_artificial: bool,
        max_pivots: usize,
    ) -> Result<(), SimplexError> {
        let total = self.n_structural + self.artificial_row.len();
        let mut in_basis = vec![false; total];
        for &b in &self.basis {
            in_basis[b] = true;
        }
        loop {
            if self.pivots >= max_pivots {
                return Err(SimplexError::IterationLimit);
            }
            let y = self.duals(cost);
            let entering = (0..total).find(|&j| {
                if in_basis[j] || (!allow_artificial && self.is_artificial(j)) {
                    return false;
                }
                let col = self.column(j);
                let d = cost(j) - col.iter().map(|&(r, a)| y[r] * a).sum::<f64>();
                d < -COST_TOL
            });
            let Some(entering) = entering else {
                return Ok(());
            };
            let u = self.ftran(&self.column(entering));
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m() {
                if u[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / u[i];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(SimplexError::Unbounded { column: entering });
            };
            in_basis[self.basis[r]] = false;
            in_basis[entering] = true;
            self.pivot(r, entering, &u);
        }
    }

    /// Pivots basic artificials out on any structural column with a usable
    /// entry; rows where none exists are redundant and keep the artificial.
    fn expel_artificials(&mut self) {
        let m = self.m();
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let in_basis: Vec<bool> = {
                let mut v = vec![false; self.n_structural];
                for &b in &self.basis {
                    if b < self.n_structural {
                        v[b] = true;
                    }
                }
                v
            };
            let candidate = (0..self.n_structural).find(|&j| {
                !in_basis[j]
                    && self.lp.columns[j]
                        .iter()
                        .map(|&(k, a)| self.binv[r * m + k] * a)
                        .sum::<f64>()
                        .abs()
                        > 1e-8
            });
            if let Some(j) = candidate {
                let u = self.ftran(&self.lp.columns[j]);
                self.pivot(r, j, &u);
            }
        }
    }
}

pub fn solve(lp: &LinearProgram, max_pivots: usize) -> Result<SimplexSolution, SimplexError> {
    let m = lp.rows;
    assert_eq!(lp.rhs.len(), m);
    assert_eq!(lp.initial_basic.len(), m);
    assert_eq!(lp.costs.len(), lp.columns.len());
    assert!(
        lp.rhs.iter().all(|&b| b >= 0.0),
        "right-hand side must be nonnegative"
    );
    let n_structural = lp.columns.len();
    let mut artificial_row = Vec::new();
    let mut basis = Vec::with_capacity(m);
    for (r, start) in lp.initial_basic.iter().enumerate() {
        match start {
            Some(j) => basis.push(*j),
            None => {
                basis.push(n_structural + artificial_row.len());
                artificial_row.push(r);
            }
        }
    }
    let mut state = State {
        lp,
        n_structural,
        artificial_row,
        basis,
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        pivots: 0,
    };
    state.refactor()?;
    if state.xb.iter().any(|&x| x < -FEAS_TOL) {
        return Err(SimplexError::Singular);
    }

    if !state.artificial_row.is_empty() {
        let phase_one = |j: usize| if j >= n_structural { 1.0 } else { 0.0 };
        state.optimize(&phase_one, true, max_pivots)?;
        let residual: f64 = state
            .basis
            .iter()
            .zip(&state.xb)
            .filter(|(&b, _)| b >= n_structural)
            .map(|(_, &x)| x.max(0.0))
            .sum();
        if residual > FEAS_TOL {
            return Err(SimplexError::Infeasible { residual });
        }
        state.expel_artificials();
    }
    let phase_two = |j: usize| if j >= n_structural { 0.0 } else { lp.costs[j] };
    state.optimize(&phase_two, false, max_pivots)?;
    state.refactor()?;

    let mut x = vec![0.0; n_structural];
    for (&b, &v) in state.basis.iter().zip(&state.xb) {
        if b < n_structural {
            x[b] = v.max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.costs).map(|(a, c)| a * c).sum();
    Ok(SimplexSolution {
        x,
        objective,
        pivots: state.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &[&[f64]], b: &[f64], c: &[f64], slack_rows: &[(usize, usize)]) -> LinearProgram {
        let rows = a.len();
        let cols = a[0].len();
        let columns = (0..cols)
            .map(|j| {
                (0..rows)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i, a[i][j]))
                    .collect()
            })
            .collect();
        let mut initial_basic = vec![None; rows];
        for &(r, j) in slack_rows {
            initial_basic[r] = Some(j);
        }
        LinearProgram {
            rows,
            columns,
            costs: c.to_vec(),
            rhs: b.to_vec(),
            initial_basic,
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let lp = dense(
            &[
                &[1.0, 0.0, 1.0, 0.0, 0.0],
                &[0.0, 2.0, 0.0, 1.0, 0.0],
                &[3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            &[4.0, 12.0, 18.0],
            &[-3.0, -5.0, 0.0, 0.0, 0.0],
            &[(0, 2), (1, 3), (2, 4)],
        );
        let s = solve(&lp, 1000).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_rows_use_phase_one() {
        // min x + 2y s.t. x + y = 1, x − y = 0.
        let lp = dense(&[&[1.0, 1.0], &[1.0, -1.0]], &[1.0, 0.0], &[1.0, 2.0], &[]);
        let s = solve(&lp, 100).unwrap();
        assert!((s.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        // x + y = 1 and x + y = 2.
        let lp = dense(&[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 2.0], &[0.0, 0.0], &[]);
        assert!(matches!(
            solve(&lp, 100),
            Err(SimplexError::Infeasible { .. })
        ));
        // min −x s.t. x − y = 0.
        let lp = dense(&[&[1.0, -1.0]], &[0.0], &[-1.0, 0.0], &[]);
        assert!(matches!(
            solve(&lp, 100),
            Err(SimplexError::Unbounded { .. })
        ));
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // x + y = 1 stated twice.
        let lp = dense(&[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 1.0], &[3.0, 1.0], &[]);
        let s = solve(&lp, 100).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert_eq!(s.x, vec![0.0, 1.0]);
    }
}
