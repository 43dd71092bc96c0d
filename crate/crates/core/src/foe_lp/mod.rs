//! Exact FOE-constrained baseline: the ranking LP over doubly-stochastic
//! matrices with the exposure gap bounded by `ρ`.

mod simplex;

pub use simplex::{LinearProgram, SimplexError, SimplexSolution, SparseColumn};

use std::time::Instant;

use serde::Serialize;

use crate::data::QueryInstance;
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::fairness::{
    expected_ndcg_at_most, exposure_difference_weights, foe_abs, Gain, GroupLabels,
};
use crate::ot::{build_cost, minmax_scale, CostMatrix, DiscountVector, DoublyStochasticPolicy};

/// Fairness levels of the reference sweep.
pub const DEFAULT_RHO_GRID: [f64; 6] = [0.01, 0.03, 0.05, 0.1, 0.25, 0.5];

/// Feasibility tolerance checked on every returned solution.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FoeLpProblem {
    cost: CostMatrix,
    groups: GroupLabels,
    discount: DiscountVector,
    rho: f64,
}

impl FoeLpProblem {
    /// `rho = f64::INFINITY` drops the fairness rows.
    pub fn new(cost: CostMatrix, groups: GroupLabels, rho: f64) -> Result<Self> {
        let n = cost.n();
        if groups.len() != n {
            return Err(invalid_input("group labels and cost size differ"));
        }
        if !groups.has_both_groups() {
            return Err(invalid_input("both groups must be nonempty"));
        }
        if rho.is_nan() || rho < 0.0 {
            return Err(invalid_param(format!("rho must be nonnegative, got {rho}")));
        }
        Ok(Self {
            cost,
            groups,
            discount: DiscountVector::new(n),
            rho,
        })
    }

    pub fn n(&self) -> usize {
        self.cost.n()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn groups(&self) -> &GroupLabels {
        &self.groups
    }

    fn linear_program(&self) -> Result<LinearProgram> {
        let n = self.n();
        let fair = self.rho.is_finite();
        let rows = 2 * n + if fair { 2 } else { 0 };
        let w = exposure_difference_weights(&self.groups, &self.discount)?;
        let mut columns: Vec<SparseColumn> = Vec::with_capacity(n * n + 2);
        let mut costs = Vec::with_capacity(n * n + 2);
        for i in 0..n {
            for j in 0..n {
                let mut col = vec![(i, 1.0), (n + j, 1.0)];
                if fair {
                    col.push((2 * n, w[(i, j)]));
                    col.push((2 * n + 1, -w[(i, j)]));
                }
                columns.push(col);
                costs.push(self.cost[(i, j)]);
            }
        }
        let mut rhs = vec![1.0; 2 * n];
        let mut initial_basic = vec![None; 2 * n];
        if fair {
            for k in 0..2 {
                initial_basic.push(Some(columns.len()));
                columns.push(vec![(2 * n + k, 1.0)]);
                costs.push(0.0);
                rhs.push(self.rho);
            }
        }
        Ok(LinearProgram {
            rows,
            columns,
            costs,
            rhs,
            initial_basic,
        })
    }
}

/// Solution of the baseline LP.
#[derive(Debug, Clone)]
pub struct FoeLpSolution {
    pub policy: DoublyStochasticPolicy,
    pub cost: f64,
    pub pivots: usize,
}

pub fn solve_foe_lp(problem: &FoeLpProblem) -> Result<FoeLpSolution> {
    let n = problem.n();
    if n == 0 {
        return Err(invalid_input("empty problem"));
    }
    let lp = problem.linear_program()?;
    let max_pivots = 200 * (lp.rows + lp.columns.len());
    let sol = simplex::solve(&lp, max_pivots).map_err(|e| match e {
        SimplexError::Infeasible { residual } => Error::Infeasible { residual },
        SimplexError::Unbounded { column } => {
            Error::Solver(format!("unbounded direction along column {column}"))
        }
        SimplexError::IterationLimit => Error::Solver("pivot limit reached".into()),
        SimplexError::Singular => Error::Solver("singular basis".into()),
    })?;
    let p = crate::matrix::Matrix::from_vec(n, n, sol.x[..n * n].to_vec());
    let row_err = p.max_row_deviation();
    let col_err = p.max_col_deviation();
    if row_err > FEASIBILITY_TOL || col_err > FEASIBILITY_TOL {
        return Err(Error::Solver(format!(
            "marginal violation {:e}",
            row_err.max(col_err)
        )));
    }
    if problem.rho.is_finite() {
        let foe = foe_abs(&p, &problem.groups, &problem.discount)?;
        if foe > problem.rho + FEASIBILITY_TOL {
            return Err(Error::Solver(format!(
                "fairness bound violated: {foe} > {}",
                problem.rho
            )));
        }
    }
    let cost = problem.cost.transport_cost(&p);
    Ok(FoeLpSolution {
        policy: DoublyStochasticPolicy::new(p, FEASIBILITY_TOL)?,
        cost,
        pivots: sol.pivots,
    })
}

/// One row of a fairness-level sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub query_id: String,
    pub rho: f64,
    pub cost: f64,
    pub foe_abs: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub wall_ms: f64,
}

/// Solves the baseline once per `ρ`, rows in the given order.
pub fn rho_sweep(query: &QueryInstance, rhos: &[f64], gain: Gain) -> Result<Vec<SweepRow>> {
    let u = minmax_scale(&query.scores)?;
    let cost = build_cost(&u)?;
    let v = DiscountVector::new(query.len());
    rhos.iter()
        .map(|&rho| {
            let problem = FoeLpProblem::new(cost.clone(), query.groups.clone(), rho)?;
            let start = Instant::now();
            let sol = solve_foe_lp(&problem)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(SweepRow {
                query_id: query.query_id.clone(),
                rho,
                cost: sol.cost,
                foe_abs: foe_abs(&sol.policy, &query.groups, &v)?,
                ndcg5: expected_ndcg_at_most(&sol.policy, &query.relevance, 5, gain)?,
                ndcg10: expected_ndcg_at_most(&sol.policy, &query.relevance, 10, gain)?,
                wall_ms,
            })
        })
        .collect()
}

/// `cost(P) − LP cost at ρ = FOE-abs(P)`: how far a policy sits above the
/// exact fairness/cost frontier. Nonnegative up to solver tolerance.
pub fn frontier_gap(
    cost: &CostMatrix,
    groups: &GroupLabels,
    policy: &DoublyStochasticPolicy,
) -> Result<f64> {
    let v = DiscountVector::new(cost.n());
    let rho = foe_abs(policy, groups, &v)?;
    let lp = solve_foe_lp(&FoeLpProblem::new(cost.clone(), groups.clone(), rho)?)?;
    Ok(cost.transport_cost(policy.matrix()) - lp.cost)
}
