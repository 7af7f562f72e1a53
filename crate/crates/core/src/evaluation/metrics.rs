//! Point-forecast error metrics and their stratified versions.

use std::collections::BTreeMap;

use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSet {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Over rows with a nonzero actual; `None` when there are none.
    pub mape: Option<f64>,
    /// `None` when the mean actual is zero.
    pub pct_rmse: Option<f64>,
    pub smape: f64,
}

/// MAE, RMSE, MAPE (skipping zero actuals), RMSE as a percentage of the mean
/// actual, and sMAPE on the 0–200 scale with `0/0 = 0`.
pub fn metrics(y: &[f64], yhat: &[f64]) -> Result<MetricSet, EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch { left: y.len(), right: yhat.len() });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = y.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut ape = 0.0;
    let mut ape_n = 0usize;
    let mut sape = 0.0;
    let mut sum_y = 0.0;
    for (&a, &f) in y.iter().zip(yhat) {
        let e = (a - f).abs();
        abs += e;
        sq += e * e;
        sum_y += a;
        if a != 0.0 {
            ape += e / a.abs();
            ape_n += 1;
        }
        let denom = a.abs() + f.abs();
        if denom > 0.0 {
            sape += 2.0 * e / denom;
        }
    }
    let rmse = (sq / n).sqrt();
    let mean_y = sum_y / n;
    Ok(MetricSet {
        n: y.len(),
        mae: abs / n,
        rmse,
        mape: (ape_n > 0).then(|| ape / ape_n as f64 * 100.0),
        pct_rmse: (mean_y != 0.0).then(|| rmse / mean_y * 100.0),
        smape: sape / n * 100.0,
    })
}

pub const BUCKET_LABELS: [&str; 5] = ["0-10", "11-20", "21-30", "31-40", "41-50"];

/// Bucket of a true count: 0–10, 11–20, 21–30, 31–40, 41–50. Values above 50
/// or below 0 have no bucket.
pub fn bucket_of(y: f64) -> Option<usize> {
    if !(0.0..=50.0).contains(&y) {
        return None;
    }
    Some(if y <= 10.0 { 0 } else { ((y - 1.0) / 10.0).floor() as usize })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumMetrics<K> {
    pub key: K,
    pub metrics: Option<MetricSet>,
}

/// One row per bucket, empty buckets included with no metrics.
pub fn bucketed_metrics(y: &[f64], yhat: &[f64]) -> Result<Vec<StratumMetrics<&'static str>>, EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch { left: y.len(), right: yhat.len() });
    }
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); BUCKET_LABELS.len()];
    for (&a, &f) in y.iter().zip(yhat) {
        if let Some(b) = bucket_of(a) {
            groups[b].0.push(a);
            groups[b].1.push(f);
        }
    }
    Ok(groups
        .into_iter()
        .zip(BUCKET_LABELS)
        .map(|((a, f), key)| StratumMetrics { key, metrics: metrics(&a, &f).ok() })
        .collect())
}

/// Metrics per hour of day; hours without rows are omitted.
pub fn hourly_metrics(y: &[f64], yhat: &[f64], hours: &[u8]) -> Result<BTreeMap<u8, MetricSet>, EvalError> {
    if y.len() != yhat.len() || y.len() != hours.len() {
        return Err(EvalError::LengthMismatch { left: y.len(), right: yhat.len().min(hours.len()) });
    }
    let mut groups: BTreeMap<u8, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((&a, &f), &h) in y.iter().zip(yhat).zip(hours) {
        let g = groups.entry(h).or_default();
        g.0.push(a);
        g.1.push(f);
    }
    groups.into_iter().map(|(h, (a, f))| metrics(&a, &f).map(|m| (h, m))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_forecast() {
        let m = metrics(&[1.0, 5.0, 0.0], &[1.0, 5.0, 0.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.smape), (0.0, 0.0, 0.0));
        assert_eq!(m.mape, Some(0.0));
    }

    #[test]
    fn hand_arithmetic() {
        let m = metrics(&[2.0, 4.0], &[3.0, 3.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.rmse, 1.0);
        let expected = (2.0 / 5.0 + 2.0 / 7.0) / 2.0 * 100.0;
        assert!((m.smape - expected).abs() < 1e-12);
        assert!((m.smape - 34.2857).abs() < 1e-4);
        assert!((m.mape.unwrap() - (0.5 + 0.25) / 2.0 * 100.0).abs() < 1e-12);
        assert!((m.pct_rmse.unwrap() - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_actuals() {
        let m = metrics(&[0.0], &[0.0]).unwrap();
        assert_eq!(m.smape, 0.0);
        assert_eq!(m.mape, None);
        assert_eq!(m.pct_rmse, None);
        assert_eq!(metrics(&[], &[]), Err(EvalError::Empty));
        assert!(metrics(&[1.0], &[]).is_err());
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket_of(0.0), Some(0));
        assert_eq!(bucket_of(10.0), Some(0));
        assert_eq!(bucket_of(11.0), Some(1));
        assert_eq!(bucket_of(20.0), Some(1));
        assert_eq!(bucket_of(21.0), Some(2));
        assert_eq!(bucket_of(50.0), Some(4));
        assert_eq!(bucket_of(51.0), None);
        let rows = bucketed_metrics(&[1.0, 3.0, 10.0], &[1.0, 2.0, 9.0]).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].metrics.unwrap().n, 3);
        assert!(rows[1..].iter().all(|r| r.metrics.is_none()));
    }

    #[test]
    fn hourly_strata_match_subsets() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let f = [1.5, 2.0, 2.0, 6.0];
        let h = [8u8, 14, 8, 14];
        let per = hourly_metrics(&y, &f, &h).unwrap();
        assert_eq!(per.len(), 2);
        assert_eq!(per[&8], metrics(&[1.0, 3.0], &[1.5, 2.0]).unwrap());
        assert_eq!(per[&14], metrics(&[2.0, 4.0], &[2.0, 6.0]).unwrap());
        let single = hourly_metrics(&y, &y, &[14; 4]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[&14].mae, 0.0);
    }
}
