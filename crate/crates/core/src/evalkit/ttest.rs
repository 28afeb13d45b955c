use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided significance threshold used when marking report cells.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// One-sample two-sided t-test outcome on a difference series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub n_obs: usize,
    /// Set when the difference series has zero variance, where the statistic
    /// is a limit rather than a Student-t draw: identical inputs give
    /// (t=0, p=1), a constant nonzero gap gives (t=+-inf, p=0).
    pub degenerate: bool,
}

impl TTestResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }
}

/// Prefix means: out[t] = (x_0 + ... + x_t) / (t+1).
pub fn running_average(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Shape("empty series".into()));
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (i, x) in xs.iter().enumerate() {
        acc += x;
        out.push(acc / (i + 1) as f64);
    }
    Ok(out)
}

/// Test whether the running-average returns of `a` and `b` differ: a
/// one-sample t-test on d_t = runavg(a)_t - runavg(b)_t against zero mean,
/// with a two-sided p-value from the Student-t CDF on n-1 degrees of freedom.
pub fn ttest_running_avg_diff(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!(
            "series lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::TooShort { need: 3, have: n });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite return".into()));
    }
    let ra = running_average(a)?;
    let rb = running_average(b)?;
    let d: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss: f64 = d.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t_stat: 0.0, p_value: 1.0, n_obs: n, degenerate: true }
        } else {
            TTestResult {
                t_stat: mean.signum() * f64::INFINITY,
                p_value: 0.0,
                n_obs: n,
                degenerate: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Numerical(format!("student-t setup: {e}")))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTestResult { t_stat: t, p_value: p, n_obs: n, degenerate: false })
}
