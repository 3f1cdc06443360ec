//! Interval and point-estimate metrics.

use cmeta::conformal::ItemInterval;

use crate::error::{BenchError, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(BenchError::Core(cmeta::Error::DimensionMismatch {
            expected: a,
            got: b,
        }));
    }
    Ok(())
}

/// Fraction of intervals containing their ITE.
pub fn metric_coverage(intervals: &[ItemInterval], true_ites: &[f64]) -> Result<f64> {
    same_len(intervals.len(), true_ites.len())?;
    if intervals.is_empty() {
        return Err(BenchError::Core(cmeta::Error::Empty("no intervals")));
    }
    let hits = intervals
        .iter()
        .zip(true_ites)
        .filter(|(iv, &t)| iv.contains(t))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean length; `+∞` if any interval is unbounded.
pub fn metric_avg_len(intervals: &[ItemInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(BenchError::Core(cmeta::Error::Empty("no intervals")));
    }
    Ok(intervals.iter().map(ItemInterval::length).sum::<f64>() / intervals.len() as f64)
}

/// Mean length over bounded intervals and the number of unbounded ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthSummary {
    /// NaN when every interval is unbounded.
    pub finite_mean: f64,
    pub vacuous: usize,
}

pub fn length_summary(intervals: &[ItemInterval]) -> LengthSummary {
    let finite: Vec<f64> = intervals
        .iter()
        .filter(|iv| iv.is_finite())
        .map(ItemInterval::length)
        .collect();
    let finite_mean = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    LengthSummary {
        finite_mean,
        vacuous: intervals.len() - finite.len(),
    }
}

pub fn metric_rmse(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    same_len(tau_hat.len(), tau_true.len())?;
    if tau_hat.is_empty() {
        return Err(BenchError::Core(cmeta::Error::Empty("no estimates")));
    }
    let mse = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

/// Mean and standard error of the finite values; NaN when there are none.
pub fn mean_se(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
