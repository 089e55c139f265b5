//! Allan-deviation analysis of repeated peak-position measurements.
//!
//! The estimator is the non-overlapping two-sample deviation of M-averaged
//! groups: split the series into consecutive groups of M, take group means,
//! and compute sqrt(mean of squared successive differences / 2). Its minimum
//! over M locates the optimal averaging depth and the attainable frequency
//! precision.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Allan deviation per averaging group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanResult {
    /// Averaging group sizes, strictly increasing.
    pub m_values: Vec<usize>,
    /// Two-sample deviation per group size, Hz.
    pub sigma_hz: Vec<f64>,
    pub series_length: usize,
}

/// Non-overlapping two-sample Allan deviation over M-averaged groups.
///
/// For each M: K = floor(len / M) group means y_k, and
/// sigma(M) = sqrt( sum_{k} (y_{k+1} - y_k)^2 / (2 (K - 1)) ).
pub fn allan_deviation(measurements: &[f64], m_values: &[usize]) -> Result<AllanResult> {
    if m_values.is_empty() {
        return Err(Error::InvalidArgument("no averaging sizes given".into()));
    }
    for w in m_values.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "averaging sizes must be strictly increasing".into(),
            ));
        }
    }
    if m_values[0] == 0 {
        return Err(Error::InvalidArgument(
            "averaging size must be positive".into(),
        ));
    }
    let max_m = *m_values.last().unwrap();
    if measurements.len() < 2 * max_m {
        return Err(Error::SeriesTooShort {
            len: measurements.len(),
            required: 2 * max_m,
        });
    }

    let mut sigma_hz = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let k = measurements.len() / m;
        let means: Vec<f64> = (0..k)
            .map(|g| measurements[g * m..(g + 1) * m].iter().sum::<f64>() / m as f64)
            .collect();
        let sum_sq: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        sigma_hz.push((sum_sq / (2.0 * (k - 1) as f64)).sqrt());
    }
    Ok(AllanResult {
        m_values: m_values.to_vec(),
        sigma_hz,
        series_length: measurements.len(),
    })
}

/// Minimum deviation and its averaging size; ties go to the smaller M.
pub fn resolution_limit(result: &AllanResult) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0usize);
    for (&m, &s) in result.m_values.iter().zip(&result.sigma_hz) {
        if s < best.0 {
            best = (s, m);
        }
    }
    best
}
