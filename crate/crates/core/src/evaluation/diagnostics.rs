//! Variability and agreement diagnostics for ridership series.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingestion::ApcStopEvent;
use crate::stats::{mean, median, mid_ranks, population_std, quantile_sorted, sorted_copy};

/// Coefficient of variation in percent; `None` when the mean is zero.
pub fn cv(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if m == 0.0 {
        return None;
    }
    Some(population_std(values)? / m * 100.0)
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Option<f64> {
    let med = median(values)?;
    median(&values.iter().map(|v| (v - med).abs()).collect::<Vec<_>>())
}

pub fn mad_over_median(values: &[f64]) -> Option<f64> {
    let med = median(values)?;
    (med != 0.0).then(|| mad(values).unwrap() / med)
}

pub fn iqr_over_median(values: &[f64]) -> Option<f64> {
    let s = sorted_copy(values);
    let med = quantile_sorted(&s, 0.5)?;
    (med != 0.0).then(|| (quantile_sorted(&s, 0.75).unwrap() - quantile_sorted(&s, 0.25).unwrap()) / med)
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// Kendall's τ-b in O(n log n) (Knight's method): sort by `(x, y)`, then
/// count the swaps a stable merge sort on `y` performs; each swap is one
/// discordant pair.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tie_pairs = |eq: &dyn Fn(usize, usize) -> bool| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for i in 1..n {
            if eq(i - 1, i) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let n1 = tie_pairs(&|i, j| pairs[i].0 == pairs[j].0);
    let n3 = tie_pairs(&|i, j| pairs[i].0 == pairs[j].0 && pairs[i].1 == pairs[j].1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = {
        let mut total = 0u64;
        let mut run = 1u64;
        for i in 1..n {
            if ys[i] == ys[i - 1] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return None;
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Some((num / denom).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Lin's concordance correlation coefficient.
pub fn ccc(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sx = population_std(x)?;
    let sy = population_std(y)?;
    let denom = sx * sx + sy * sy + (mx - my) * (mx - my);
    if denom == 0.0 {
        // Both series constant and equal.
        return Some(1.0);
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    Some(2.0 * cov / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub ccc: Option<f64>,
}

pub fn agreement(x: &[f64], y: &[f64]) -> Agreement {
    Agreement {
        n: x.len().min(y.len()),
        pearson: pearson(x, y),
        spearman: spearman(x, y),
        kendall_tau: kendall_tau_b(x, y),
        ccc: ccc(x, y),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellVariability {
    pub route_id: String,
    pub hour: u8,
    pub n: usize,
    pub mean: f64,
    pub cv: Option<f64>,
    pub mad_over_median: Option<f64>,
    pub iqr_over_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    /// Variability of the training target per route × hour cell.
    pub cells: Vec<CellVariability>,
    /// Agreement of route × hour mean ridership between train and test,
    /// over the cells present in both.
    pub agreement: Agreement,
}

fn cell_values(events: &[ApcStopEvent]) -> BTreeMap<(String, u8), Vec<f64>> {
    let mut cells: BTreeMap<(String, u8), Vec<f64>> = BTreeMap::new();
    for e in events {
        cells.entry((e.route_id.clone(), e.departure_time.hour() as u8)).or_default().push(e.continuing as f64);
    }
    cells
}

pub fn diagnostics(train: &[ApcStopEvent], test: &[ApcStopEvent]) -> DiagnosticsReport {
    let train_cells = cell_values(train);
    let test_cells = cell_values(test);
    let cells = train_cells
        .iter()
        .map(|((route, hour), v)| CellVariability {
            route_id: route.clone(),
            hour: *hour,
            n: v.len(),
            mean: mean(v).unwrap_or(f64::NAN),
            cv: cv(v),
            mad_over_median: mad_over_median(v),
            iqr_over_median: iqr_over_median(v),
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) =
        train_cells.iter().filter_map(|(k, v)| test_cells.get(k).map(|w| (mean(v).unwrap(), mean(w).unwrap()))).unzip();
    DiagnosticsReport { cells, agreement: agreement(&a, &b) }
}

/// One row of an independent vehicle-location (AVL) boarding count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvlRecord {
    pub route_id: String,
    pub date: NaiveDate,
    pub hour: u8,
    pub boardings: f64,
}

pub const AVL_COLUMNS: &[&str] = &["route_id", "date", "hour", "boardings"];

pub fn parse_avl<R: Read>(reader: R, path: &Path) -> Result<Vec<AvlRecord>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| EvalError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    if header.iter().map(String::as_str).ne(AVL_COLUMNS.iter().copied()) {
        return Err(EvalError::Input(format!("{}: expected header {AVL_COLUMNS:?}, found {header:?}", path.display())));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| EvalError::Input(format!("{}, line {}: {e}", path.display(), i + 2))))
        .collect()
}

/// Agreement between APC and AVL boardings aggregated per route, date and hour.
pub fn avl_cross_check(apc: &[ApcStopEvent], avl: &[AvlRecord]) -> Agreement {
    let mut apc_totals: BTreeMap<(String, NaiveDate, u8), f64> = BTreeMap::new();
    for e in apc {
        *apc_totals.entry((e.route_id.clone(), e.departure_time.date(), e.departure_time.hour() as u8)).or_default() +=
            e.boardings as f64;
    }
    let (a, b): (Vec<f64>, Vec<f64>) = avl
        .iter()
        .filter_map(|r| apc_totals.get(&(r.route_id.clone(), r.date, r.hour)).map(|&t| (t, r.boardings)))
        .unzip();
    agreement(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorDemandFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Simple least-squares line of per-stop error on per-stop mean ridership.
pub fn error_demand_regression(ridership: &[f64], mae: &[f64]) -> Result<ErrorDemandFit, EvalError> {
    if ridership.len() != mae.len() {
        return Err(EvalError::LengthMismatch { left: ridership.len(), right: mae.len() });
    }
    if ridership.len() < 3 {
        return Err(EvalError::TooFewPoints(ridership.len()));
    }
    let mx = mean(ridership).unwrap();
    let my = mean(mae).unwrap();
    let sxx: f64 = ridership.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let sxy: f64 = ridership.iter().zip(mae).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = ridership.iter().zip(mae).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = mae.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ErrorDemandFit { slope, intercept, r2 })
}
