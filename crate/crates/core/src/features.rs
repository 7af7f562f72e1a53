//! Assembly of the per-event feature table.
//!
//! Column groups, in order: identifiers (removable as a block), temporal,
//! weather, socio-economic, facility counts, then graph features from the
//! training-window snapshots. Missing values are NaN; models impute them with
//! training means.

use std::collections::HashMap;

use chrono::{Datelike, Timelike, Weekday};

use crate::ingestion::{
    facility_counts, ApcStopEvent, Facility, FacilityCounts, FacilityKind, HolidayCalendar, StopRecord, WeatherReading,
};
use crate::models::{Column, FeatureFrame};
use crate::network::{graph_feature_names, GraphContext};
use crate::temporal::{time_features, weekday_code};

/// The identifier block dropped in the "without ID" regime.
pub const ID_COLUMNS: [&str; 7] =
    ["route_id", "direction", "stop_code", "lat", "lon", "previous_station", "destination"];

const CATEGORICAL: [&str; 5] = ["route_id", "direction", "stop_code", "previous_station", "destination"];

pub const TEMPORAL_COLUMNS: [&str; 7] =
    ["minutes_in_day", "time_sin", "time_cos", "period", "weekday", "weekend_holiday", "stop_sequence"];
pub const WEATHER_COLUMNS: [&str; 3] = ["temperature_c", "rain_mm", "rel_humidity_pct"];

/// Marker for "no previous stop" in the previous_station column.
pub const NO_PREVIOUS: &str = "";

pub fn feature_names() -> Vec<String> {
    ID_COLUMNS
        .iter()
        .chain(&TEMPORAL_COLUMNS)
        .chain(&WEATHER_COLUMNS)
        .map(|s| s.to_string())
        .chain(std::iter::once("socio_score".to_string()))
        .chain(FacilityKind::ALL.iter().map(|k| format!("fac_{}", k.name())))
        .chain(graph_feature_names())
        .collect()
}

#[derive(Debug, Clone)]
pub struct StopInfo {
    pub lat: f64,
    pub lon: f64,
    pub socio_score: Option<i64>,
    pub facilities: FacilityCounts,
}

/// Static per-stop attributes keyed by stop code.
pub fn stop_info(stops: &[StopRecord], facilities: &[Facility], radius_m: f64) -> HashMap<String, StopInfo> {
    stops
        .iter()
        .map(|s| {
            (
                s.stop_code.clone(),
                StopInfo {
                    lat: s.lat,
                    lon: s.lon,
                    socio_score: s.socio_score,
                    facilities: facility_counts(s, facilities, radius_m),
                },
            )
        })
        .collect()
}

pub struct FeatureContext<'a> {
    pub stops: &'a HashMap<String, StopInfo>,
    pub holidays: &'a HolidayCalendar,
    pub rest_days: &'a [Weekday],
    pub graph: &'a GraphContext,
}

/// Previous stop and final stop of each event's trip.
fn trip_neighbors(events: &[ApcStopEvent]) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut by_trip: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        by_trip.entry(&e.trip_key).or_default().push(i);
    }
    let mut prev = vec![None; events.len()];
    let mut dest = vec![0; events.len()];
    for idx in by_trip.values_mut() {
        idx.sort_by_key(|&i| events[i].stop_sequence);
        let last = *idx.last().unwrap();
        for (k, &i) in idx.iter().enumerate() {
            prev[i] = k.checked_sub(1).map(|j| idx[j]);
            dest[i] = last;
        }
    }
    (prev, dest)
}

/// One row per event. `weather` is aligned with `events` (see
/// [`crate::ingestion::join_weather`]).
pub fn build_features(
    events: &[ApcStopEvent],
    weather: &[Option<WeatherReading>],
    ctx: &FeatureContext,
) -> FeatureFrame {
    assert_eq!(events.len(), weather.len());
    let names = feature_names();
    let n = events.len();
    let (prev, dest) = trip_neighbors(events);

    let mut numeric: Vec<Vec<f64>> = vec![Vec::with_capacity(n); names.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::with_capacity(n); names.len()];
    let is_cat: Vec<bool> = names.iter().map(|n| CATEGORICAL.contains(&n.as_str())).collect();
    let mut row = Vec::with_capacity(names.len());

    for (i, e) in events.iter().enumerate() {
        row.clear();
        let info = ctx.stops.get(&e.stop_code);
        let prev_stop = prev[i].map(|j| events[j].stop_code.as_str());
        let tf = time_features(e.departure_time, e.weekday, ctx.holidays, ctx.rest_days);

        categorical[0].push(e.route_id.clone());
        categorical[1].push(e.direction.clone());
        categorical[2].push(e.stop_code.clone());
        row.extend([f64::NAN, f64::NAN, f64::NAN]);
        row.push(info.map_or(f64::NAN, |s| s.lat));
        row.push(info.map_or(f64::NAN, |s| s.lon));
        categorical[5].push(prev_stop.unwrap_or(NO_PREVIOUS).to_string());
        categorical[6].push(events[dest[i]].stop_code.clone());
        row.extend([f64::NAN, f64::NAN]);

        row.extend([
            tf.minutes_in_day as f64,
            tf.time_sin,
            tf.time_cos,
            tf.period as u8 as f64,
            weekday_code(e.weekday) as f64,
            if tf.weekend_holiday { 1.0 } else { 0.0 },
            e.stop_sequence as f64,
        ]);
        match weather[i] {
            Some(w) => row.extend([w.temperature_c, w.rain_mm, w.rel_humidity_pct]),
            None => row.extend([f64::NAN; 3]),
        }
        row.push(info.and_then(|s| s.socio_score).map_or(f64::NAN, |v| v as f64));
        match info {
            Some(s) => row.extend(s.facilities.0.iter().map(|&c| c as f64)),
            None => row.extend([f64::NAN; 19]),
        }
        ctx.graph.features(e.departure_time.hour() as u8, &e.stop_code, prev_stop, &e.route_id, &mut row);
        debug_assert_eq!(row.len(), names.len());
        for (c, &v) in row.iter().enumerate() {
            if !is_cat[c] {
                numeric[c].push(v);
            }
        }
    }

    let columns = is_cat
        .iter()
        .enumerate()
        .map(|(c, &cat)| {
            if cat {
                Column::Categorical(std::mem::take(&mut categorical[c]))
            } else {
                Column::Numeric(std::mem::take(&mut numeric[c]))
            }
        })
        .collect();
    FeatureFrame {
        names,
        columns,
        target: events.iter().map(|e| e.continuing as f64).collect(),
        stop_codes: events.iter().map(|e| e.stop_code.clone()).collect(),
    }
}

/// `features.csv`: stop_code, every registry column, then the target.
/// Missing numeric values are written as empty fields.
pub fn write_feature_frame<W: std::io::Write>(writer: W, frame: &FeatureFrame) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["stop_code"];
    header.extend(frame.names.iter().map(String::as_str));
    header.push("continuing");
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..frame.rows() {
        record.clear();
        record.push(frame.stop_codes[r].clone());
        for c in &frame.columns {
            record.push(match c {
                Column::Numeric(v) if v[r].is_nan() => String::new(),
                Column::Numeric(v) => v[r].to_string(),
                Column::Categorical(v) => v[r].clone(),
            });
        }
        record.push(frame.target[r].to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Hour of day of each event, for stratified metrics.
pub fn event_hours(events: &[ApcStopEvent]) -> Vec<u8> {
    events.iter().map(|e| e.departure_time.hour() as u8).collect()
}

/// Sanity check that the recorded weekday matches the timestamp.
pub fn weekday_consistent(e: &ApcStopEvent) -> bool {
    e.departure_time.weekday() == e.weekday
}
