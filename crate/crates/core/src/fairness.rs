//! Exposure, fairness of exposure, and ranking quality of stochastic
//! policies. Every metric here is linear in the policy matrix (FOE before
//! the absolute value), so it can be evaluated on a policy or averaged over
//! a decomposition of it with the same result.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};
use crate::matrix::Matrix;
use crate::ot::DiscountVector;

/// Binary group membership; `true` marks a protected document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabels {
    protected: Vec<bool>,
}

impl GroupLabels {
    pub fn new(protected: Vec<bool>) -> Self {
        Self { protected }
    }

    pub fn len(&self) -> usize {
        self.protected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protected.is_empty()
    }

    pub fn is_protected(&self, doc: usize) -> bool {
        self.protected[doc]
    }

    pub fn flags(&self) -> &[bool] {
        &self.protected
    }

    pub fn protected(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.protected[i]).collect()
    }

    pub fn non_protected(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.protected[i]).collect()
    }

    pub fn has_both_groups(&self) -> bool {
        self.protected.iter().any(|&p| p) && self.protected.iter().any(|&p| !p)
    }

    /// Labels with the two groups exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.protected.iter().map(|p| !p).collect())
    }
}

/// Gain applied to graded relevance in DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `2^rel − 1`
    #[default]
    Exponential,
    /// `rel`
    Linear,
}

impl Gain {
    pub fn apply(self, relevance: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(relevance as i32) - 1.0,
            Gain::Linear => relevance as f64,
        }
    }
}

/// Per-policy evaluation row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub foe_abs: f64,
    /// Negative transport cost; larger is better.
    pub utility: f64,
    pub wall_time_ms: f64,
}

fn check_policy(p: &Matrix, n: usize) -> Result<()> {
    if p.shape() != (n, n) {
        return Err(invalid_input(format!(
            "policy shape {:?} does not match {n} documents",
            p.shape()
        )));
    }
    Ok(())
}

/// Average discounted exposure of the documents in `group`.
pub fn exposure(p: impl AsRef<Matrix>, group: &[usize], v: &DiscountVector) -> Result<f64> {
    let p = p.as_ref();
    check_policy(p, v.len())?;
    if group.is_empty() {
        return Err(invalid_input("exposure of an empty group"));
    }
    if group.iter().any(|&i| i >= p.rows()) {
        return Err(invalid_input("group index out of range"));
    }
    let total: f64 = group
        .iter()
        .map(|&i| {
            p.row(i)
                .iter()
                .zip(v.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    Ok(total / group.len() as f64)
}

/// Weights `W` with `⟨W, P⟩ = exposure(protected) − exposure(non-protected)`.
pub fn exposure_difference_weights(groups: &GroupLabels, v: &DiscountVector) -> Result<Matrix> {
    let n = groups.len();
    if v.len() != n {
        return Err(invalid_input("discount and group lengths differ"));
    }
    let n_prot = groups.protected().len();
    let n_non = n - n_prot;
    if n_prot == 0 || n_non == 0 {
        return Err(invalid_input("both groups must be nonempty"));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        let scale = if groups.is_protected(i) {
            1.0 / n_prot as f64
        } else {
            -1.0 / n_non as f64
        };
        scale * v.as_slice()[j]
    }))
}

/// Signed exposure gap, protected minus non-protected.
pub fn exposure_gap(
    p: impl AsRef<Matrix>,
    groups: &GroupLabels,
    v: &DiscountVector,
) -> Result<f64> {
    let p = p.as_ref();
    let prot = groups.protected();
    let non = groups.non_protected();
    if prot.is_empty() || non.is_empty() {
        return Err(invalid_input("both groups must be nonempty"));
    }
    Ok(exposure(p, &prot, v)? - exposure(p, &non, v)?)
}

/// Fairness of exposure with `g(x) = |x|`.
pub fn foe_abs(p: impl AsRef<Matrix>, groups: &GroupLabels, v: &DiscountVector) -> Result<f64> {
    Ok(exposure_gap(p, groups, v)?.abs())
}

/// DCG@k of the ideal ordering of `relevance`.
pub fn ideal_dcg_at_k(relevance: &[u32], k: usize, gain: Gain) -> f64 {
    let mut sorted = relevance.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &r)| gain.apply(r) / ((j + 2) as f64).log2())
        .sum()
}

/// Expected nDCG@k of a stochastic policy:
/// `Σ_i Σ_{j≤k} P_ij · gain(rel_i) / log2(1 + j)` over the ideal DCG@k.
/// Zero when every relevance is zero.
pub fn expected_ndcg_at_k(
    p: impl AsRef<Matrix>,
    relevance: &[u32],
    k: usize,
    gain: Gain,
) -> Result<f64> {
    let p = p.as_ref();
    let n = relevance.len();
    check_policy(p, n)?;
    if k == 0 || k > n {
        return Err(invalid_param(format!("cutoff k = {k} outside 1..={n}")));
    }
    let ideal = ideal_dcg_at_k(relevance, k, gain);
    if ideal == 0.0 {
        return Ok(0.0);
    }
    let discounts: Vec<f64> = (0..k).map(|j| 1.0 / ((j + 2) as f64).log2()).collect();
    let dcg: f64 = relevance
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mass: f64 = p.row(i)[..k]
                .iter()
                .zip(&discounts)
                .map(|(a, b)| a * b)
                .sum();
            gain.apply(r) * mass
        })
        .sum();
    Ok(dcg / ideal)
}

/// `expected_ndcg_at_k` with the cutoff truncated to the list length, for
/// short lists evaluated at a fixed cutoff.
pub fn expected_ndcg_at_most(
    p: impl AsRef<Matrix>,
    relevance: &[u32],
    k: usize,
    gain: Gain,
) -> Result<f64> {
    expected_ndcg_at_k(p, relevance, k.min(relevance.len()), gain)
}

/// Utility `Σ_ij ũ_i v_j P_ij`, the negative of the unshifted transport
/// cost `−ũ vᵀ`.
pub fn policy_utility(p: impl AsRef<Matrix>, u_scaled: &[f64], v: &DiscountVector) -> Result<f64> {
    let p = p.as_ref();
    check_policy(p, u_scaled.len())?;
    if v.len() != u_scaled.len() {
        return Err(invalid_input("discount and score lengths differ"));
    }
    Ok(u_scaled
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            u * p
                .row(i)
                .iter()
                .zip(v.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum())
}
