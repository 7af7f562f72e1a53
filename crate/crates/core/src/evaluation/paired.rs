//! Paired comparison of two frameworks: Wilcoxon signed-rank and Cliff's delta.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;
use crate::stats::{mean, median, mid_ranks};

/// Largest effective sample for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Wilcoxon {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on `x − y`. Zero differences are
/// dropped and tied magnitudes share their mid-rank. For up to
/// [`EXACT_MAX_N`] pairs the p-value counts, over all `2^n` sign assignments,
/// those whose positive-rank sum is at least as extreme as observed; above
/// that a tie-corrected normal approximation is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<Wilcoxon, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Err(EvalError::NoNonzeroDifferences);
    }
    let n = d.len();
    let ranks = mid_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    if n <= EXACT_MAX_N {
        // Mid-ranks are multiples of 1/2, so doubled ranks are integers and
        // the null distribution of the doubled sum is a subset-sum count.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w2 = (w * 2.0).round() as usize;
        let extreme: u64 = counts.iter().enumerate().filter(|(s, _)| *s <= w2 || *s >= max - w2).map(|(_, c)| c).sum();
        let p = extreme as f64 / (1u64 << n) as f64;
        return Ok(Wilcoxon { statistic: w, p_value: p.min(1.0), n, exact: true });
    }

    let nf = n as f64;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mu = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (w - mu) / var.sqrt();
        2.0 * Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
    };
    Ok(Wilcoxon { statistic: w, p_value: p.min(1.0), n, exact: false })
}

/// `(#{x_i > y_j} − #{x_i < y_j}) / (|x|·|y|)` over all cross pairs.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.is_empty() || y.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut score: i64 = 0;
    for &a in x {
        let below = ys.partition_point(|&b| b < a) as i64;
        let not_above = ys.partition_point(|&b| b <= a) as i64;
        let above = ys.len() as i64 - not_above;
        score += below - above;
    }
    Ok(score as f64 / (x.len() * y.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PolygonBetter,
    GlobalBetter,
    NotSignificant,
    NoDifference,
}

/// Polygon-vs-global comparison of matched per-split errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub mean_diff: f64,
    pub median_diff: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub cliffs_delta: f64,
    pub verdict: Verdict,
}

/// Differences are polygon − global; a negative mean favors the polygons.
pub fn compare_frameworks(polygon: &[f64], global: &[f64], alpha: f64) -> Result<PairedTestResult, EvalError> {
    if polygon.len() != global.len() {
        return Err(EvalError::LengthMismatch { left: polygon.len(), right: global.len() });
    }
    if polygon.is_empty() {
        return Err(EvalError::Empty);
    }
    let diffs: Vec<f64> = polygon.iter().zip(global).map(|(a, b)| a - b).collect();
    let mean_diff = mean(&diffs).unwrap();
    let median_diff = median(&diffs).unwrap();
    let delta = cliffs_delta(polygon, global)?;
    match wilcoxon_signed_rank(polygon, global) {
        Ok(w) => {
            let verdict = if w.p_value >= alpha {
                Verdict::NotSignificant
            } else if mean_diff < 0.0 {
                Verdict::PolygonBetter
            } else {
                Verdict::GlobalBetter
            };
            Ok(PairedTestResult {
                n: polygon.len(),
                mean_diff,
                median_diff,
                statistic: w.statistic,
                p_value: w.p_value,
                cliffs_delta: delta,
                verdict,
            })
        }
        Err(EvalError::NoNonzeroDifferences) => Ok(PairedTestResult {
            n: polygon.len(),
            mean_diff,
            median_diff,
            statistic: 0.0,
            p_value: 1.0,
            cliffs_delta: delta,
            verdict: Verdict::NoDifference,
        }),
        Err(e) => Err(e),
    }
}
