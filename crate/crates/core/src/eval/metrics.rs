use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary statistics of angular errors, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25_mean: f64,
    pub worst25_mean: f64,
    pub errors: Vec<f64>,
}

/// Column headers in report order.
pub const METRIC_COLUMNS: [&str; 5] = ["Mean", "Median", "Tri.", "Best-25%", "Worst-25%"];

impl MetricsReport {
    /// The five statistics in [`METRIC_COLUMNS`] order.
    pub fn columns(&self) -> [f64; 5] {
        [self.mean, self.median, self.trimean, self.best25_mean, self.worst25_mean]
    }
}

/// Inclusive linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn compute_metrics(errors: &[f64]) -> Result<MetricsReport> {
    if errors.is_empty() {
        return Err(Error::domain("metrics need at least one error"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::domain("errors must be finite"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let tail = n.div_ceil(4);
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let q1 = quantile_sorted(&sorted, 0.25);
    let q2 = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(MetricsReport {
        n,
        mean: mean_of(&sorted),
        median: q2,
        trimean: (q1 + 2.0 * q2 + q3) / 4.0,
        best25_mean: mean_of(&sorted[..tail]),
        worst25_mean: mean_of(&sorted[n - tail..]),
        errors: errors.to_vec(),
    })
}
