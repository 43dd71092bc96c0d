//! Max-stabilized log-sum-exp helpers.

/// `log Σ exp(x_i)`, shifted by the maximum so no term overflows.
/// Returns `-inf` for an empty slice or one containing only `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    logsumexp_iter(xs.iter().copied())
}

pub fn logsumexp_iter<I>(xs: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.map(|x| (x - max).exp()).sum();
    max + s.ln()
}
