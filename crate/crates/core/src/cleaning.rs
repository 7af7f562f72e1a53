//! Ride-level plausibility filters.
//!
//! A ride is the set of stop events sharing a `trip_key`. Every filter keeps
//! or drops whole rides and returns the kept events in input order together
//! with the dropped keys in first-appearance order, so `kept ∪ dropped` always
//! partitions the input rides.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::ingestion::ApcStopEvent;
use crate::stats::{quantile_sorted, sorted_copy};

/// Rides needed before quartiles are meaningful.
pub const MIN_RIDES_FOR_IQR: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum CleaningError {
    #[error("IQR thresholds need at least {MIN_RIDES_FOR_IQR} rides, got {0}")]
    TooFewRides(usize),
}

/// Boarding/alighting totals of one ride and the two discrepancy measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RideDiscrepancy {
    pub trip_key: String,
    pub tb: i64,
    pub ta: i64,
    pub pct_diff: f64,
    pub abs_diff: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqrThresholds {
    pub pct_lower: f64,
    pub pct_upper: f64,
    pub abs_lower: f64,
    pub abs_upper: f64,
}

impl IqrThresholds {
    pub fn pct_extreme(&self, pct: f64) -> bool {
        pct < self.pct_lower || pct > self.pct_upper
    }

    pub fn abs_extreme(&self, abs: f64) -> bool {
        abs < self.abs_lower || abs > self.abs_upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Negative,
    Capacity,
    DualIqr,
}

/// One line of the cleaning report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRide {
    pub trip_key: String,
    pub reason: DropReason,
    pub tb: i64,
    pub ta: i64,
    pub pct_diff: f64,
    pub abs_diff: i64,
}

impl DroppedRide {
    fn new(d: RideDiscrepancy, reason: DropReason) -> Self {
        DroppedRide { trip_key: d.trip_key, reason, tb: d.tb, ta: d.ta, pct_diff: d.pct_diff, abs_diff: d.abs_diff }
    }
}

/// Groups event indices by trip, preserving first-appearance order of trips.
pub fn group_rides(events: &[ApcStopEvent]) -> Vec<(&str, Vec<usize>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let slot = *index.entry(e.trip_key.as_str()).or_insert_with(|| {
            groups.push((e.trip_key.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(i);
    }
    groups
}

/// Drops every ride for which `bad` holds on at least one stop.
fn drop_rides_where(events: &[ApcStopEvent], bad: impl Fn(&ApcStopEvent) -> bool) -> (Vec<ApcStopEvent>, Vec<String>) {
    let mut dropped = Vec::new();
    let mut dropped_set = HashSet::new();
    for (key, idx) in group_rides(events) {
        if idx.iter().any(|&i| bad(&events[i])) {
            dropped.push(key.to_string());
            dropped_set.insert(key);
        }
    }
    let kept = events.iter().filter(|e| !dropped_set.contains(e.trip_key.as_str())).cloned().collect();
    (kept, dropped)
}

pub fn drop_negative_rides(events: &[ApcStopEvent]) -> (Vec<ApcStopEvent>, Vec<String>) {
    drop_rides_where(events, |e| e.boardings < 0 || e.alightings < 0 || e.continuing < 0)
}

/// Drops rides where any count strictly exceeds `delta`.
pub fn capacity_filter(events: &[ApcStopEvent], delta: i64) -> (Vec<ApcStopEvent>, Vec<String>) {
    drop_rides_where(events, |e| e.boardings > delta || e.alightings > delta || e.continuing > delta)
}

/// Discrepancy of one ride's events (all assumed to share a trip key).
pub fn ride_discrepancy<'a>(events: impl IntoIterator<Item = &'a ApcStopEvent>) -> RideDiscrepancy {
    let mut tb = 0i64;
    let mut ta = 0i64;
    let mut key = String::new();
    for e in events {
        if key.is_empty() {
            key = e.trip_key.clone();
        }
        tb += e.boardings;
        ta += e.alightings;
    }
    let abs_diff = (tb - ta).abs();
    let denom = tb.max(ta);
    let pct_diff = if denom == 0 { 0.0 } else { abs_diff as f64 / denom as f64 * 100.0 };
    RideDiscrepancy { trip_key: key, tb, ta, pct_diff, abs_diff }
}

pub fn ride_discrepancies(events: &[ApcStopEvent]) -> Vec<RideDiscrepancy> {
    group_rides(events).into_iter().map(|(_, idx)| ride_discrepancy(idx.iter().map(|&i| &events[i]))).collect()
}

/// Box-plot bounds `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]` of one sample.
pub fn iqr_bounds(values: &[f64]) -> Option<(f64, f64)> {
    let sorted = sorted_copy(values);
    let q1 = quantile_sorted(&sorted, 0.25)?;
    let q3 = quantile_sorted(&sorted, 0.75)?;
    let iqr = q3 - q1;
    Some((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Estimates both measures' bounds. Call this on training rides only; the
/// result is a plain value reused unchanged on evaluation windows.
pub fn iqr_thresholds(train: &[RideDiscrepancy]) -> Result<IqrThresholds, CleaningError> {
    if train.len() < MIN_RIDES_FOR_IQR {
        return Err(CleaningError::TooFewRides(train.len()));
    }
    let pct: Vec<f64> = train.iter().map(|d| d.pct_diff).collect();
    let abs: Vec<f64> = train.iter().map(|d| d.abs_diff as f64).collect();
    let (pct_lower, pct_upper) = iqr_bounds(&pct).expect("non-empty");
    let (abs_lower, abs_upper) = iqr_bounds(&abs).expect("non-empty");
    Ok(IqrThresholds { pct_lower, pct_upper, abs_lower, abs_upper })
}

/// A ride is an outlier only when both measures fall outside their bounds.
pub fn is_dual_outlier(d: &RideDiscrepancy, t: &IqrThresholds) -> bool {
    t.pct_extreme(d.pct_diff) && t.abs_extreme(d.abs_diff as f64)
}

pub fn dual_criterion_filter(
    events: &[ApcStopEvent],
    thresholds: &IqrThresholds,
) -> (Vec<ApcStopEvent>, Vec<RideDiscrepancy>) {
    let mut dropped = Vec::new();
    let mut dropped_set = HashSet::new();
    for (key, idx) in group_rides(events) {
        let d = ride_discrepancy(idx.iter().map(|&i| &events[i]));
        if is_dual_outlier(&d, thresholds) {
            dropped_set.insert(key);
            dropped.push(d);
        }
    }
    let kept = events.iter().filter(|e| !dropped_set.contains(e.trip_key.as_str())).cloned().collect();
    (kept, dropped)
}

/// Negative and capacity filters, which need no estimated thresholds.
pub fn plausibility_filters(events: &[ApcStopEvent], delta: i64) -> (Vec<ApcStopEvent>, Vec<DroppedRide>) {
    let mut report = Vec::new();
    let disc: HashMap<String, RideDiscrepancy> =
        ride_discrepancies(events).into_iter().map(|d| (d.trip_key.clone(), d)).collect();
    let (after_neg, neg) = drop_negative_rides(events);
    report.extend(neg.into_iter().map(|k| DroppedRide::new(disc[&k].clone(), DropReason::Negative)));
    let (after_cap, cap) = capacity_filter(&after_neg, delta);
    report.extend(cap.into_iter().map(|k| DroppedRide::new(disc[&k].clone(), DropReason::Capacity)));
    (after_cap, report)
}

pub fn dual_iqr_report(dropped: Vec<RideDiscrepancy>) -> Vec<DroppedRide> {
    dropped.into_iter().map(|d| DroppedRide::new(d, DropReason::DualIqr)).collect()
}

pub fn write_cleaning_report<W: Write>(writer: W, rows: &[DroppedRide]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record(["trip_key", "reason", "tb", "ta", "pct_diff", "abs_diff"])?;
    }
    wtr.flush()?;
    Ok(())
}
