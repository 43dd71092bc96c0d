//! Drawing rankings from doubly-stochastic policies.
//!
//! Gumbel matching perturbs the cost `1 − P` and solves an assignment;
//! the Birkhoff decomposition writes `P` as a convex combination of
//! permutation matrices and samples one of them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::fairness::{expected_ndcg_at_most, Gain};
use crate::matrix::Matrix;
use crate::ot::{solve_assignment, CostMatrix, DoublyStochasticPolicy, Permutation};

/// Residual entries at or below this are treated as zero.
pub const SUPPORT_EPS: f64 = 1e-12;
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GumMsConfig {
    /// Noise scale; `None` means `1/√n` for each policy.
    pub sigma: Option<f64>,
    pub tau: f64,
    pub seed: u64,
}

impl Default for GumMsConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            tau: 1.0,
            seed: 0,
        }
    }
}

impl GumMsConfig {
    pub fn sigma_for(&self, n: usize) -> f64 {
        self.sigma.unwrap_or_else(|| 1.0 / (n.max(1) as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid_param(format!("sigma must be nonnegative, got {s}")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid_param(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Standard Gumbel draws `−ln(−ln U)` with `U` on the open unit interval.
pub fn sample_gumbel_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(n, n, |_, _| {
        let u: f64 = rng.sample(Open01);
        -(-u.ln()).ln()
    })
}

/// One ranking from the assignment on `((1 − P) + σN)/τ`.
pub fn gumms_sample<R: Rng + ?Sized>(
    policy: &DoublyStochasticPolicy,
    cfg: &GumMsConfig,
    rng: &mut R,
) -> Result<Permutation> {
    cfg.validate()?;
    let n = policy.n();
    let sigma = cfg.sigma_for(n);
    let p = policy.matrix();
    let cost = if sigma == 0.0 {
        p.map(|x| (1.0 - x) / cfg.tau)
    } else {
        let noise = sample_gumbel_matrix(n, rng);
        Matrix::from_fn(n, n, |i, j| {
            ((1.0 - p[(i, j)]) + sigma * noise[(i, j)]) / cfg.tau
        })
    };
    Ok(solve_assignment(&CostMatrix::new(cost)?).0)
}

/// Mean of `k` sampled permutation matrices and its squared Frobenius
/// distance to the policy.
pub fn estimate_policy<R: Rng + ?Sized>(
    policy: &DoublyStochasticPolicy,
    k: usize,
    cfg: &GumMsConfig,
    rng: &mut R,
) -> Result<(Matrix, f64)> {
    if k == 0 {
        return Err(invalid_param("sample count must be at least 1"));
    }
    let n = policy.n();
    let mut counts = vec![0usize; n * n];
    for _ in 0..k {
        let perm = gumms_sample(policy, cfg, rng)?;
        for (i, &j) in perm.assignment().iter().enumerate() {
            counts[i * n + j] += 1;
        }
    }
    let est = Matrix::from_vec(n, n, counts.iter().map(|&c| c as f64 / k as f64).collect());
    let err = policy
        .matrix()
        .as_slice()
        .iter()
        .zip(est.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((est, err))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvnComponent {
    pub alpha: f64,
    pub permutation: Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvnDecomposition {
    pub components: Vec<BvnComponent>,
}

impl BvnDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn reconstruct(&self) -> Matrix {
        let n = self.components.first().map_or(0, |c| c.permutation.len());
        let mut out = Matrix::zeros(n, n);
        for c in &self.components {
            for (i, &j) in c.permutation.assignment().iter().enumerate() {
                out[(i, j)] += c.alpha;
            }
        }
        out
    }

    /// Weighted average of a per-permutation statistic.
    pub fn expectation(&self, mut f: impl FnMut(&Permutation) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.components {
            total += c.alpha * f(&c.permutation)?;
        }
        Ok(total)
    }
}

/// Greedy Birkhoff decomposition.
///
/// Each round takes the heaviest permutation inside the residual support,
/// removes its smallest entry's worth of mass, and zeroes entries at or
/// below [`SUPPORT_EPS`]. Stops once the remaining mass falls below
/// `mass_tolerance`; the weights are then rescaled to sum to one.
pub fn bvnd_decompose(
    policy: &DoublyStochasticPolicy,
    mass_tolerance: f64,
) -> Result<BvnDecomposition> {
    if !(mass_tolerance > 0.0) {
        return Err(invalid_param("mass tolerance must be positive"));
    }
    let n = policy.n();
    if n == 0 {
        return Err(invalid_input("empty policy"));
    }
    let mut residual = policy
        .matrix()
        .map(|x| if x > SUPPORT_EPS { x } else { 0.0 });
    let off_support = 2.0 * n as f64 + 1.0;
    let mut components = Vec::new();
    let max_rounds = n * n;
    loop {
        let mass = residual.sum() / n as f64;
        if mass < mass_tolerance {
            break;
        }
        if components.len() >= max_rounds {
            return Err(Error::NumericalRank {
                remaining_mass: mass,
            });
        }
        let cost = residual.map(|x| if x > 0.0 { -x } else { off_support });
        let (perm, _) = solve_assignment(&CostMatrix::new(cost)?);
        let alpha = perm
            .assignment()
            .iter()
            .enumerate()
            .map(|(i, &j)| residual[(i, j)])
            .fold(f64::INFINITY, f64::min);
        if !(alpha > 0.0) {
            return Err(Error::NumericalRank {
                remaining_mass: mass,
            });
        }
        for (i, &j) in perm.assignment().iter().enumerate() {
            let r = residual[(i, j)] - alpha;
            residual[(i, j)] = if r > SUPPORT_EPS { r } else { 0.0 };
        }
        components.push(BvnComponent {
            alpha,
            permutation: perm,
        });
    }
    let total: f64 = components.iter().map(|c| c.alpha).sum();
    for c in &mut components {
        c.alpha /= total;
    }
    Ok(BvnDecomposition { components })
}

/// Draws a component with probability equal to its weight.
pub fn bvnd_sample<R: Rng + ?Sized>(
    decomposition: &BvnDecomposition,
    rng: &mut R,
) -> Result<(Permutation, f64)> {
    let dist = WeightedIndex::new(decomposition.components.iter().map(|c| c.alpha))
        .map_err(|e| invalid_input(format!("bad decomposition weights: {e}")))?;
    let c = &decomposition.components[dist.sample(rng)];
    Ok((c.permutation.clone(), c.alpha))
}

/// Mean nDCG@k over sampled rankings.
pub fn sampled_ndcg(
    samples: &[Permutation],
    relevance: &[u32],
    k: usize,
    gain: Gain,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid_input("no samples"));
    }
    let mut total = 0.0;
    for s in samples {
        total += expected_ndcg_at_most(s.to_matrix(), relevance, k, gain)?;
    }
    Ok(total / samples.len() as f64)
}
