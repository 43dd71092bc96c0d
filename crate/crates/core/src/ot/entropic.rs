use serde::{Deserialize, Serialize};

use super::{CostMatrix, DoublyStochasticPolicy, DualPotentials};
use crate::error::{invalid_input, invalid_param, Result};
use crate::matrix::Matrix;
use crate::numerics::logsumexp_iter;

/// How `sinkhorn_project` interprets its input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkhornInput {
    /// `A ← M / ε`: the input acts as a negative cost (logit).
    #[default]
    Logits,
    /// `A ← log(M) / ε`: the input is a nonnegative plan.
    LogProbabilities,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid_param(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(invalid_input(format!(
            "{name} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// Log of the Gibbs kernel, `−C / ε`. The kernel itself is never formed.
pub fn gibbs_kernel_log(cost: &CostMatrix, epsilon: f64) -> Result<Matrix> {
    check_epsilon(epsilon)?;
    Ok(cost.as_matrix().map(|c| -c / epsilon))
}

/// Subtracts each row's log-sum-exp in place.
pub(crate) fn normalize_rows_log(a: &mut Matrix) {
    for i in 0..a.rows() {
        let row = a.row_mut(i);
        let lse = logsumexp_iter(row.iter().copied());
        row.iter_mut().for_each(|x| *x -= lse);
    }
}

/// Subtracts each column's log-sum-exp in place.
pub(crate) fn normalize_cols_log(a: &mut Matrix) {
    let (rows, cols) = a.shape();
    for j in 0..cols {
        let lse = logsumexp_iter((0..rows).map(|i| a[(i, j)]));
        for i in 0..rows {
            a[(i, j)] -= lse;
        }
    }
}

/// Log-domain Sinkhorn scaling: `A ← M/ε`, then `iterations` rounds of row
/// normalization followed by column normalization, returning `exp(A)`.
///
/// Column sums of the result are one to rounding; row sums carry the
/// residual of the truncated iteration, which is stored as the policy
/// tolerance.
pub fn sinkhorn_project(
    m: &Matrix,
    epsilon: f64,
    iterations: usize,
    input: SinkhornInput,
) -> Result<DoublyStochasticPolicy> {
    check_epsilon(epsilon)?;
    if iterations == 0 {
        return Err(invalid_param("sinkhorn needs at least one iteration"));
    }
    if !m.is_square() {
        return Err(invalid_input("sinkhorn input must be square"));
    }
    let mut a = match input {
        SinkhornInput::Logits => {
            if !m.all_finite() {
                return Err(invalid_input("sinkhorn input must be finite"));
            }
            m.map(|x| x / epsilon)
        }
        SinkhornInput::LogProbabilities => {
            if m.as_slice().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(invalid_input(
                    "log-probability sinkhorn input must be finite and nonnegative",
                ));
            }
            m.map(|x| x.ln() / epsilon)
        }
    };
    for _ in 0..iterations {
        normalize_rows_log(&mut a);
        normalize_cols_log(&mut a);
    }
    let p = a.map(f64::exp);
    if !p.all_finite() {
        return Err(invalid_input(
            "sinkhorn input has an all-zero row or column",
        ));
    }
    Ok(DoublyStochasticPolicy::from_measured(p))
}

/// Column potential from a row potential:
/// `g_j = −ε · logsumexp_i (f_i/ε − C_ij/ε)`.
pub fn dual_to_column_potential(f: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let n = cost.n();
    check_len("f", f, n)?;
    let c = cost.as_matrix();
    Ok((0..n)
        .map(|j| -epsilon * logsumexp_iter((0..n).map(|i| (f[i] - c[(i, j)]) / epsilon)))
        .collect())
}

/// Row potential from a column potential:
/// `f_i = −ε · logsumexp_j (g_j/ε − C_ij/ε)`.
pub fn dual_to_row_potential(g: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let n = cost.n();
    check_len("g", g, n)?;
    let c = cost.as_matrix();
    Ok((0..n)
        .map(|i| -epsilon * logsumexp_iter((0..n).map(|j| (g[j] - c[(i, j)]) / epsilon)))
        .collect())
}

/// `P_ij = exp((f_i + g_j − C_ij)/ε)`. Doubly stochastic only at the
/// optimal duals.
pub fn primal_from_duals(f: &[f64], g: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<Matrix> {
    check_epsilon(epsilon)?;
    let n = cost.n();
    check_len("f", f, n)?;
    check_len("g", g, n)?;
    let c = cost.as_matrix();
    Ok(Matrix::from_fn(n, n, |i, j| {
        ((f[i] + g[j] - c[(i, j)]) / epsilon).exp()
    }))
}

/// Entropic dual objective
/// `J = ⟨f + g, 1⟩ − ε Σ_ij exp((f_i + g_j − C_ij)/ε)`.
pub fn dual_objective(f: &[f64], g: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let n = cost.n();
    check_len("f", f, n)?;
    check_len("g", g, n)?;
    let c = cost.as_matrix();
    let lse =
        logsumexp_iter((0..n * n).map(|k| (f[k / n] + g[k % n] - c[(k / n, k % n)]) / epsilon));
    let linear: f64 = f.iter().sum::<f64>() + g.iter().sum::<f64>();
    Ok(linear - epsilon * lse.exp())
}

/// `H(P) = −Σ P_ij (log P_ij − 1)` with `0 · log 0 = 0`.
pub fn entropy(p: &Matrix) -> Result<f64> {
    if p.as_slice().iter().any(|&x| !(x >= 0.0)) {
        return Err(invalid_input("entropy needs nonnegative entries"));
    }
    Ok(-p
        .as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * (x.ln() - 1.0))
        .sum::<f64>())
}

/// `⟨C, P⟩ − ε H(P)`. `epsilon = 0` gives the plain transport cost.
pub fn entropic_primal_objective(p: &Matrix, cost: &CostMatrix, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(invalid_param("epsilon must be nonnegative"));
    }
    if p.shape() != cost.as_matrix().shape() {
        return Err(invalid_input("plan and cost shapes differ"));
    }
    let h = entropy(p)?;
    let transport = cost.transport_cost(p);
    Ok(if epsilon == 0.0 {
        transport
    } else {
        transport - epsilon * h
    })
}

/// Converged entropic transport solution.
#[derive(Debug, Clone)]
pub struct EntropicSolution {
    pub potentials: DualPotentials,
    pub plan: Matrix,
    pub iterations: usize,
    /// Largest marginal deviation of `plan` from one.
    pub marginal_error: f64,
}

/// Solves entropic OT by alternating the two potential maps until both
/// marginals of the recovered plan are within `tolerance` of one.
pub fn solve_entropic(
    cost: &CostMatrix,
    epsilon: f64,
    max_iterations: usize,
    tolerance: f64,
) -> Result<EntropicSolution> {
    check_epsilon(epsilon)?;
    let n = cost.n();
    let mut f = vec![0.0; n];
    let mut g = dual_to_column_potential(&f, cost, epsilon)?;
    let mut iterations = 0;
    let mut marginal_error = f64::INFINITY;
    while iterations < max_iterations {
        f = dual_to_row_potential(&g, cost, epsilon)?;
        g = dual_to_column_potential(&f, cost, epsilon)?;
        iterations += 1;
        let plan = primal_from_duals(&f, &g, cost, epsilon)?;
        marginal_error = plan.max_row_deviation().max(plan.max_col_deviation());
        if marginal_error <= tolerance {
            break;
        }
    }
    let plan = primal_from_duals(&f, &g, cost, epsilon)?;
    Ok(EntropicSolution {
        potentials: DualPotentials { f, g, epsilon },
        plan,
        iterations,
        marginal_error,
    })
}
