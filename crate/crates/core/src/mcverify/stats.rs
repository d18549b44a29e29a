//! Sample summaries and log-log slope fitting.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bounds::ser_f64;
use crate::error::{Error, Result};

/// Nearest-rank quantile of an ascending sample: the `⌈q n⌉`-th smallest.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Median of an ascending sample; even sizes average the middle pair.
pub fn median(sorted: &[f64]) -> f64 {
    assert!(!sorted.is_empty(), "median of an empty sample");
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (zero for a single observation).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Least-squares slope of `ln value` against `ln param`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::invalid(format!(
            "slope fit needs positive points, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct parameters"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricSummary {
    pub count: usize,
    #[serde(serialize_with = "ser_f64")]
    pub mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub sd: f64,
    #[serde(serialize_with = "ser_f64")]
    pub median: f64,
    #[serde(serialize_with = "ser_f64")]
    pub min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max: f64,
    /// Keyed by the quantile level as written in the config.
    pub quantiles: BTreeMap<String, f64>,
}

impl MetricSummary {
    pub fn from_sample(xs: &[f64], levels: &[f64]) -> Self {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        MetricSummary {
            count: xs.len(),
            mean: mean(xs),
            sd: variance(xs).sqrt(),
            median: median(&sorted),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles: levels
                .iter()
                .map(|&q| (q.to_string(), quantile(&sorted, q)))
                .collect(),
        }
    }

    pub fn quantile(&self, q: f64) -> Option<f64> {
        self.quantiles.get(&q.to_string()).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&xs, 0.9), 9.0);
        assert_eq!(quantile(&xs, 0.91), 10.0);
        assert_eq!(quantile(&xs, 0.05), 1.0);
        assert_eq!(median(&xs), 5.5);
        assert_eq!(median(&xs[..9]), 5.0);
    }

    #[test]
    fn moments() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        assert!((variance(&xs) - 32.0 / 7.0).abs() < 1e-14);
        assert_eq!(variance(&[3.0]), 0.0);
    }

    #[test]
    fn slopes() {
        let sq: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 11.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((fit_loglog_slope(&sq).unwrap() - 2.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = [1.0, 2.0, 4.0].iter().map(|&x| (x, 7.0)).collect();
        assert!(fit_loglog_slope(&flat).unwrap().abs() < 1e-12);
        let inv: Vec<(f64, f64)> = [512.0, 2048.0, 8192.0].iter().map(|&x| (x, 2.0 / x)).collect();
        assert!((fit_loglog_slope(&inv).unwrap() + 1.0).abs() < 1e-12);
        assert!(fit_loglog_slope(&sq[..2]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn summary() {
        let s = MetricSummary::from_sample(&[3.0, 1.0, 2.0, 4.0], &[0.5, 0.9]);
        assert_eq!((s.min, s.max, s.median), (1.0, 4.0, 2.5));
        assert_eq!(s.quantile(0.5), Some(2.0));
        assert_eq!(s.quantile(0.9), Some(4.0));
    }
}
