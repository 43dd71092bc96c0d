use anyhow::{bail, ensure, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean of a nonempty sample.
pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        bail!("cannot aggregate over zero queries");
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        bail!("median of an empty sample");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    /// `None` with fewer than two pairs.
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

/// Two-sided paired t-test of `a − b` against zero.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    ensure!(
        a.len() == b.len(),
        "paired samples differ in length: {} vs {}",
        a.len(),
        b.len()
    );
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&d)?;
    let n = d.len();
    if n < 2 {
        return Ok(PairedTest {
            mean_diff,
            t_stat: None,
            p_value: None,
        });
    }
    let var = d.iter().map(|x| (x - mean_diff).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p) = if se == 0.0 {
        // Every pair differs by the same amount.
        if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (mean_diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean_diff / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)?;
        (t, 2.0 * dist.cdf(-t.abs()))
    };
    Ok(PairedTest {
        mean_diff,
        t_stat: Some(t),
        p_value: Some(p),
    })
}
