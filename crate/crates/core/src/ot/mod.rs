//! Transport cost construction, entropic optimal transport in the log
//! domain, and exact linear assignment.
//!
//! All problems use uniform unit marginals: a transport plan between `n`
//! documents and `n` rank positions is an `n × n` doubly-stochastic matrix.

mod assignment;
mod entropic;

pub use assignment::solve_assignment;
pub use entropic::{
    dual_objective, dual_to_column_potential, dual_to_row_potential, entropic_primal_objective,
    entropy, gibbs_kernel_log, primal_from_duals, sinkhorn_project, solve_entropic,
    EntropicSolution, SinkhornInput,
};
pub(crate) use entropic::{normalize_cols_log, normalize_rows_log};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::matrix::Matrix;

/// Square, finite transport cost. `C[(i, j)]` is the cost of placing
/// document `i` at rank position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid_input(format!(
                "cost matrix must be square, got {:?}",
                matrix.shape()
            )));
        }
        if !matrix.all_finite() {
            return Err(invalid_input("cost matrix has non-finite entries"));
        }
        Ok(Self(matrix))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Transport cost `⟨C, P⟩`.
    pub fn transport_cost(&self, plan: &Matrix) -> f64 {
        self.0.dot(plan)
    }
}

impl std::ops::Index<(usize, usize)> for CostMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Logarithmic position discount `v_j = 1 / log2(1 + j)` for 1-based
/// positions `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountVector(Vec<f64>);

impl DiscountVector {
    pub fn new(n: usize) -> Self {
        Self((1..=n).map(|j| 1.0 / ((1 + j) as f64).log2()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Dual vectors of the entropic problem with regularization `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
}

/// A stochastic re-ranking policy: `P[(i, j)]` is the probability of
/// showing document `i` at position `j`.
///
/// Row and column sums are within `tolerance` of one. Converged objects
/// carry a tolerance around `1e-6` or tighter; truncated Sinkhorn outputs
/// carry their measured residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublyStochasticPolicy {
    matrix: Matrix,
    tolerance: f64,
}

impl DoublyStochasticPolicy {
    pub const DEFAULT_TOLERANCE: f64 = 1e-6;

    pub fn new(matrix: Matrix, tolerance: f64) -> Result<Self> {
        if !(tolerance >= 0.0) {
            return Err(invalid_input("policy tolerance must be nonnegative"));
        }
        if !matrix.is_square() {
            return Err(invalid_input(format!(
                "policy must be square, got {:?}",
                matrix.shape()
            )));
        }
        let slack = tolerance.max(1e-12);
        if matrix
            .as_slice()
            .iter()
            .any(|&p| !(p >= -slack && p <= 1.0 + slack))
        {
            return Err(invalid_input("policy entries must lie in [0, 1]"));
        }
        let dev = matrix.max_row_deviation().max(matrix.max_col_deviation());
        if !(dev <= slack) {
            return Err(invalid_input(format!(
                "policy marginals deviate from one by {dev:e} (tolerance {tolerance:e})"
            )));
        }
        Ok(Self { matrix, tolerance })
    }

    /// Wraps a matrix whose marginals were established by construction,
    /// recording its measured marginal deviation as the tolerance.
    pub(crate) fn from_measured(matrix: Matrix) -> Self {
        let dev = matrix.max_row_deviation().max(matrix.max_col_deviation());
        Self {
            matrix,
            tolerance: dev.max(1e-12),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            matrix: Matrix::filled(n, n, 1.0 / n as f64),
            tolerance: 1e-12,
        }
    }

    pub fn from_permutation(perm: &Permutation) -> Self {
        Self {
            matrix: perm.to_matrix(),
            tolerance: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn get(&self, doc: usize, position: usize) -> f64 {
        self.matrix[(doc, position)]
    }
}

/// A ranking as a bijection: `assignment[i]` is the rank position of
/// document `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    assignment: Vec<usize>,
}

impl Permutation {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if !is_bijection(&assignment) {
            return Err(invalid_input(format!(
                "{assignment:?} is not a permutation"
            )));
        }
        Ok(Self { assignment })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
        }
    }

    /// Builds the permutation from documents listed in rank order.
    pub fn from_ranking(order: &[usize]) -> Result<Self> {
        if !is_bijection(order) {
            return Err(invalid_input(format!("{order:?} is not a ranking")));
        }
        let mut assignment = vec![0; order.len()];
        for (pos, &doc) in order.iter().enumerate() {
            assignment[doc] = pos;
        }
        Ok(Self { assignment })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn position_of(&self, doc: usize) -> usize {
        self.assignment[doc]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Documents in rank order (the inverse permutation).
    pub fn ranking(&self) -> Vec<usize> {
        let mut order = vec![0; self.assignment.len()];
        for (doc, &pos) in self.assignment.iter().enumerate() {
            order[pos] = doc;
        }
        order
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.assignment.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &j) in self.assignment.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }

    pub fn is_valid(&self) -> bool {
        is_bijection(&self.assignment)
    }
}

pub fn is_bijection(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    for &j in map {
        if j >= map.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// Min-max scaling to `[0, 1]`. A constant vector maps to `0.5`
/// everywhere.
pub fn minmax_scale(u: &[f64]) -> Result<Vec<f64>> {
    if u.is_empty() {
        return Err(invalid_input("cannot scale an empty score vector"));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(invalid_input("scores must be finite"));
    }
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; u.len()]);
    }
    let range = hi - lo;
    Ok(u.iter().map(|&x| (x - lo) / range).collect())
}

/// Cost `C_ij = (1 − ũ_i)·v_j`.
///
/// This is the negative utility `−ũ vᵀ` shifted by the column constant
/// `v_j`, so it has the same minimizers over doubly-stochastic matrices
/// while staying nonnegative.
pub fn build_cost(u_scaled: &[f64]) -> Result<CostMatrix> {
    if u_scaled.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid_input("scaled scores must lie in [0, 1]"));
    }
    let v = DiscountVector::new(u_scaled.len());
    let n = u_scaled.len();
    CostMatrix::new(Matrix::from_fn(n, n, |i, j| {
        (1.0 - u_scaled[i]) * v.as_slice()[j]
    }))
}


impl AsRef<Matrix> for DoublyStochasticPolicy {
    fn as_ref(&self) -> &Matrix {
        &self.matrix
    }
}
