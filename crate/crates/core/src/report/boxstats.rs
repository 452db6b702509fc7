use serde::Serialize;

use crate::metrics::MetricValue;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum BoxStatsError {
    #[error("no values to summarise")]
    Empty,
    #[error("no finite values to summarise ({unbounded} unbounded)")]
    NoFiniteValues { unbounded: usize },
    #[error("NaN in input")]
    NaN,
}

/// Five-number summary with Tukey whiskers. Infinite inputs are left out
/// of every statistic and only counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats<T> {
    /// Number of finite values.
    pub n: usize,
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    pub whisker_low: T,
    pub whisker_high: T,
    pub outliers: Vec<T>,
    pub unbounded: usize,
}

/// Type-7 quantile of sorted data: linear interpolation at `h = (n-1)p`.
pub fn quantile<T: Scalar>(sorted: &[T], p: T) -> T {
    let h = T::from_usize(sorted.len() - 1).expect("length fits scalar") * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0);
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

pub fn box_stats<T: Scalar>(values: &[T]) -> Result<BoxStats<T>, BoxStatsError> {
    if values.is_empty() {
        return Err(BoxStatsError::Empty);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(BoxStatsError::NaN);
    }
    let mut finite: Vec<T> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let unbounded = values.len() - finite.len();
    if finite.is_empty() {
        return Err(BoxStatsError::NoFiniteValues { unbounded });
    }
    finite.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let q1 = quantile(&finite, T::lit(0.25));
    let median = quantile(&finite, T::lit(0.5));
    let q3 = quantile(&finite, T::lit(0.75));
    let iqr = q3 - q1;
    let fence = T::lit(1.5) * iqr;
    let (lo_fence, hi_fence) = (q1 - fence, q3 + fence);
    let inside = |v: &T| *v >= lo_fence && *v <= hi_fence;
    let whisker_low = *finite.iter().find(|v| inside(v)).expect("median lies within the fences");
    let whisker_high = *finite.iter().rev().find(|v| inside(v)).expect("median lies within the fences");
    let outliers = finite.iter().copied().filter(|v| !inside(v)).collect();
    Ok(BoxStats {
        n: finite.len(),
        min: finite[0],
        q1,
        median,
        q3,
        max: finite[finite.len() - 1],
        whisker_low,
        whisker_high,
        outliers,
        unbounded,
    })
}

/// [`box_stats`] over metric values, unbounded entries counted separately.
pub fn box_stats_metric(values: &[MetricValue]) -> Result<BoxStats<f64>, BoxStatsError> {
    let raw: Vec<f64> = values.iter().map(|v| v.to_f64()).collect();
    box_stats(&raw)
}
