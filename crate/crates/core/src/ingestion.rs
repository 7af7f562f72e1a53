//! Loading and aligning the four source tables.
//!
//! Every input is a CSV file with a fixed header (see the README for the
//! column contract). Loaders are strict: a malformed row aborts the load with
//! its line number instead of being skipped. Values are passed through
//! unchanged; negative counts, for instance, are a cleaning concern.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime, Weekday};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by [`haversine_m`].
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const APC_COLUMNS: &[&str] = &[
    "route_id",
    "direction",
    "alternative",
    "trip_key",
    "departure_time",
    "weekday",
    "stop_code",
    "stop_sequence",
    "boardings",
    "alightings",
    "continuing",
];
pub const WEATHER_COLUMNS: &[&str] = &["timestamp", "temperature_c", "rain_mm", "rel_humidity_pct"];
pub const STOP_COLUMNS: &[&str] = &["stop_code", "lat", "lon", "neighborhood", "socio_score"];
pub const FACILITY_COLUMNS: &[&str] = &["kind", "lat", "lon"];
pub const HOLIDAY_COLUMNS: &[&str] = &["date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    Header { path: PathBuf, expected: Vec<String>, found: Vec<String> },
    #[error("{path}, line {line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("{path}, line {line}: duplicate (trip_key, stop_sequence) = ({trip_key}, {stop_sequence})")]
    DuplicateEvent { path: PathBuf, line: u64, trip_key: String, stop_sequence: u32 },
    #[error("{path}, line {line}: duplicate stop_code {stop_code}")]
    DuplicateStop { path: PathBuf, line: u64, stop_code: String },
    #[error("{path}, line {line}: duplicate holiday {date}")]
    DuplicateHoliday { path: PathBuf, line: u64, date: NaiveDate },
    #[error("{path}: trip {trip_key} has departure times decreasing along its stop sequence")]
    TripOrder { path: PathBuf, trip_key: String },
    #[error("write failed: {0}")]
    Write(#[from] csv::Error),
}

mod timestamp_format {
    use chrono::{NaiveDate, NaiveDateTime};
    use serde::{Deserialize, Deserializer, Serializer};

    pub const FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&t.format(FORMAT))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&raw, FORMAT)
            .or_else(|_| raw.parse::<NaiveDateTime>())
            .map_err(|e| serde::de::Error::custom(format!("bad timestamp {raw:?}: {e}")))
    }

    pub mod date {
        use super::*;

        pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
            s.collect_str(&d.format("%Y-%m-%d"))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
            let raw = String::deserialize(d)?;
            NaiveDate::parse_from_str(&raw, "%Y-%m-%d")
                .map_err(|e| serde::de::Error::custom(format!("bad date {raw:?}: {e}")))
        }
    }
}

mod weekday_format {
    use chrono::Weekday;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn name(day: Weekday) -> &'static str {
        match day {
            Weekday::Mon => "Monday",
            Weekday::Tue => "Tuesday",
            Weekday::Wed => "Wednesday",
            Weekday::Thu => "Thursday",
            Weekday::Fri => "Friday",
            Weekday::Sat => "Saturday",
            Weekday::Sun => "Sunday",
        }
    }

    pub fn serialize<S: Serializer>(d: &Weekday, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(name(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Weekday, D::Error> {
        let raw = String::deserialize(d)?;
        raw.trim().parse::<Weekday>().map_err(|_| serde::de::Error::custom(format!("bad weekday {raw:?}")))
    }
}

pub use weekday_format::name as weekday_name;

/// One stop from the stop table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub stop_code: String,
    pub lat: f64,
    pub lon: f64,
    pub neighborhood: String,
    pub socio_score: Option<i64>,
}

/// One stop visit of one trip. `continuing` is the load after departure and
/// is the prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApcStopEvent {
    pub route_id: String,
    pub direction: String,
    pub alternative: String,
    pub trip_key: String,
    #[serde(with = "timestamp_format")]
    pub departure_time: NaiveDateTime,
    #[serde(with = "weekday_format")]
    pub weekday: Weekday,
    pub stop_code: String,
    pub stop_sequence: u32,
    pub boardings: i64,
    pub alightings: i64,
    pub continuing: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    #[serde(with = "timestamp_format")]
    pub timestamp: NaiveDateTime,
    pub temperature_c: f64,
    pub rain_mm: f64,
    pub rel_humidity_pct: f64,
}

/// The three weather values attached to an event by [`join_weather`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherReading {
    pub temperature_c: f64,
    pub rain_mm: f64,
    pub rel_humidity_pct: f64,
}

/// Closed set of urban facility categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilityKind {
    Education,
    Sport,
    Playground,
    CommunityCenter,
    Health,
    ElderlySocialClub,
    Daycares,
    Hospital,
    University,
    OrganizedShoppingCenter,
    OrganizedCommerceCenters,
    IndustrialArea,
    Market,
    NeighborhoodShoppingCenters,
    OldCity,
    HighTechPark,
    CivicCenter,
    StreetOrientedCommerce,
    StreetAccompaniedCommerce,
}

impl FacilityKind {
    pub const ALL: [FacilityKind; 19] = [
        FacilityKind::Education,
        FacilityKind::Sport,
        FacilityKind::Playground,
        FacilityKind::CommunityCenter,
        FacilityKind::Health,
        FacilityKind::ElderlySocialClub,
        FacilityKind::Daycares,
        FacilityKind::Hospital,
        FacilityKind::University,
        FacilityKind::OrganizedShoppingCenter,
        FacilityKind::OrganizedCommerceCenters,
        FacilityKind::IndustrialArea,
        FacilityKind::Market,
        FacilityKind::NeighborhoodShoppingCenters,
        FacilityKind::OldCity,
        FacilityKind::HighTechPark,
        FacilityKind::CivicCenter,
        FacilityKind::StreetOrientedCommerce,
        FacilityKind::StreetAccompaniedCommerce,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FacilityKind::Education => "education",
            FacilityKind::Sport => "sport",
            FacilityKind::Playground => "playground",
            FacilityKind::CommunityCenter => "community_center",
            FacilityKind::Health => "health",
            FacilityKind::ElderlySocialClub => "elderly_social_club",
            FacilityKind::Daycares => "daycares",
            FacilityKind::Hospital => "hospital",
            FacilityKind::University => "university",
            FacilityKind::OrganizedShoppingCenter => "organized_shopping_center",
            FacilityKind::OrganizedCommerceCenters => "organized_commerce_centers",
            FacilityKind::IndustrialArea => "industrial_area",
            FacilityKind::Market => "market",
            FacilityKind::NeighborhoodShoppingCenters => "neighborhood_shopping_centers",
            FacilityKind::OldCity => "old_city",
            FacilityKind::HighTechPark => "high_tech_park",
            FacilityKind::CivicCenter => "civic_center",
            FacilityKind::StreetOrientedCommerce => "street_oriented_commerce",
            FacilityKind::StreetAccompaniedCommerce => "street_accompanied_commerce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub kind: FacilityKind,
    pub lat: f64,
    pub lon: f64,
}

/// Per-kind facility counts, indexed by [`FacilityKind::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FacilityCounts(pub [u32; 19]);

impl FacilityCounts {
    pub fn get(&self, kind: FacilityKind) -> u32 {
        self.0[kind.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    pub dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HolidayRow {
    #[serde(with = "timestamp_format::date")]
    date: NaiveDate,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Open { path: path.to_path_buf(), source })
}

/// Reads every record of a headed CSV, checking the header against `columns`.
/// Returns `(line_number, record)` pairs.
fn read_records<T: DeserializeOwned, R: Read>(
    reader: R,
    path: &Path,
    columns: &[&str],
) -> Result<Vec<(u64, T)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::Malformed { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .clone();
    let found: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if found.iter().map(String::as_str).ne(columns.iter().copied()) {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: columns.iter().map(|c| c.to_string()).collect(),
            found,
        });
    }
    let mut out = Vec::new();
    for result in rdr.deserialize::<T>() {
        match result {
            Ok(rec) => {
                // position() was advanced past the record; line numbers are 1-based
                // with the header on line 1.
                out.push((out.len() as u64 + 2, rec));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(out.len() as u64 + 2);
                return Err(IngestError::Malformed { path: path.to_path_buf(), line, message: e.to_string() });
            }
        }
    }
    Ok(out)
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Malformed { path: path.to_path_buf(), line, message: message.into() }
}

pub fn load_apc(path: &Path) -> Result<Vec<ApcStopEvent>, IngestError> {
    parse_apc(open(path)?, path)
}

pub fn parse_apc<R: Read>(reader: R, path: &Path) -> Result<Vec<ApcStopEvent>, IngestError> {
    let rows: Vec<(u64, ApcStopEvent)> = read_records(reader, path, APC_COLUMNS)?;
    let mut seen: HashMap<(String, u32), u64> = HashMap::with_capacity(rows.len());
    for (line, ev) in &rows {
        if ev.stop_sequence == 0 {
            return Err(malformed(path, *line, "stop_sequence must be positive"));
        }
        if ev.trip_key.is_empty() {
            return Err(malformed(path, *line, "empty trip_key"));
        }
        if seen.insert((ev.trip_key.clone(), ev.stop_sequence), *line).is_some() {
            return Err(IngestError::DuplicateEvent {
                path: path.to_path_buf(),
                line: *line,
                trip_key: ev.trip_key.clone(),
                stop_sequence: ev.stop_sequence,
            });
        }
    }
    let events: Vec<ApcStopEvent> = rows.into_iter().map(|(_, e)| e).collect();
    check_trip_order(&events, path)?;
    Ok(events)
}

fn check_trip_order(events: &[ApcStopEvent], path: &Path) -> Result<(), IngestError> {
    let mut by_trip: HashMap<&str, Vec<(u32, NaiveDateTime)>> = HashMap::new();
    for e in events {
        by_trip.entry(&e.trip_key).or_default().push((e.stop_sequence, e.departure_time));
    }
    let mut keys: Vec<&&str> = by_trip.keys().collect();
    keys.sort();
    for key in keys {
        let mut stops = by_trip[*key].clone();
        stops.sort_by_key(|s| s.0);
        if stops.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(IngestError::TripOrder { path: path.to_path_buf(), trip_key: key.to_string() });
        }
    }
    Ok(())
}

pub fn load_weather(path: &Path) -> Result<Vec<WeatherObservation>, IngestError> {
    parse_weather(open(path)?, path)
}

pub fn parse_weather<R: Read>(reader: R, path: &Path) -> Result<Vec<WeatherObservation>, IngestError> {
    let rows: Vec<(u64, WeatherObservation)> = read_records(reader, path, WEATHER_COLUMNS)?;
    for (line, w) in &rows {
        if !(0.0..=100.0).contains(&w.rel_humidity_pct) {
            return Err(malformed(path, *line, format!("rel_humidity_pct {} outside [0, 100]", w.rel_humidity_pct)));
        }
        if !(w.rain_mm >= 0.0) {
            return Err(malformed(path, *line, format!("rain_mm {} is negative", w.rain_mm)));
        }
        if !w.temperature_c.is_finite() {
            return Err(malformed(path, *line, "temperature_c is not finite"));
        }
    }
    Ok(rows.into_iter().map(|(_, w)| w).collect())
}

pub fn load_stops(path: &Path) -> Result<Vec<StopRecord>, IngestError> {
    parse_stops(open(path)?, path)
}

pub fn parse_stops<R: Read>(reader: R, path: &Path) -> Result<Vec<StopRecord>, IngestError> {
    let rows: Vec<(u64, StopRecord)> = read_records(reader, path, STOP_COLUMNS)?;
    let mut seen = HashMap::new();
    for (line, s) in &rows {
        check_coordinates(path, *line, s.lat, s.lon)?;
        if seen.insert(s.stop_code.clone(), *line).is_some() {
            return Err(IngestError::DuplicateStop {
                path: path.to_path_buf(),
                line: *line,
                stop_code: s.stop_code.clone(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, s)| s).collect())
}

fn check_coordinates(path: &Path, line: u64, lat: f64, lon: f64) -> Result<(), IngestError> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(malformed(path, line, format!("latitude {lat} outside [-90, 90]")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(malformed(path, line, format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}

pub fn load_facilities(path: &Path) -> Result<Vec<Facility>, IngestError> {
    parse_facilities(open(path)?, path)
}

pub fn parse_facilities<R: Read>(reader: R, path: &Path) -> Result<Vec<Facility>, IngestError> {
    let rows: Vec<(u64, Facility)> = read_records(reader, path, FACILITY_COLUMNS)?;
    for (line, f) in &rows {
        check_coordinates(path, *line, f.lat, f.lon)?;
    }
    Ok(rows.into_iter().map(|(_, f)| f).collect())
}

pub fn load_holidays(path: &Path) -> Result<HolidayCalendar, IngestError> {
    parse_holidays(open(path)?, path)
}

pub fn parse_holidays<R: Read>(reader: R, path: &Path) -> Result<HolidayCalendar, IngestError> {
    let rows: Vec<(u64, HolidayRow)> = read_records(reader, path, HOLIDAY_COLUMNS)?;
    let mut cal = HolidayCalendar::default();
    for (line, row) in rows {
        if !cal.dates.insert(row.date) {
            return Err(IngestError::DuplicateHoliday { path: path.to_path_buf(), line, date: row.date });
        }
    }
    Ok(cal)
}

fn write_records<T: Serialize, W: Write>(writer: W, columns: &[&str], rows: &[T]) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(columns)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_apc<W: Write>(writer: W, events: &[ApcStopEvent]) -> Result<(), IngestError> {
    write_records(writer, APC_COLUMNS, events)
}

pub fn write_weather<W: Write>(writer: W, rows: &[WeatherObservation]) -> Result<(), IngestError> {
    write_records(writer, WEATHER_COLUMNS, rows)
}

pub fn write_stops<W: Write>(writer: W, rows: &[StopRecord]) -> Result<(), IngestError> {
    write_records(writer, STOP_COLUMNS, rows)
}

pub fn write_facilities<W: Write>(writer: W, rows: &[Facility]) -> Result<(), IngestError> {
    write_records(writer, FACILITY_COLUMNS, rows)
}

pub fn write_holidays<W: Write>(writer: W, cal: &HolidayCalendar) -> Result<(), IngestError> {
    let rows: Vec<HolidayRow> = cal.dates.iter().map(|&date| HolidayRow { date }).collect();
    write_records(writer, HOLIDAY_COLUMNS, &rows)
}

/// Great-circle distance in meters between two `(lat, lon)` pairs in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Counts facilities of each kind within `radius_m` of the stop. The
/// boundary is inclusive.
pub fn facility_counts(stop: &StopRecord, facilities: &[Facility], radius_m: f64) -> FacilityCounts {
    let mut counts = FacilityCounts::default();
    for f in facilities {
        if haversine_m((stop.lat, stop.lon), (f.lat, f.lon)) <= radius_m {
            counts.0[f.kind.index()] += 1;
        }
    }
    counts
}

/// Attaches the nearest weather observation within `tol` of each event's
/// departure time. Equidistant observations resolve to the earlier one.
/// The result is aligned with `events`; `None` marks missing weather.
pub fn join_weather(
    events: &[ApcStopEvent],
    weather: &[WeatherObservation],
    tol: Duration,
) -> Vec<Option<WeatherReading>> {
    let mut obs: Vec<&WeatherObservation> = weather.iter().collect();
    obs.sort_by_key(|w| w.timestamp);
    events
        .iter()
        .map(|ev| {
            let t = ev.departure_time;
            let after = obs.partition_point(|w| w.timestamp < t);
            let mut best: Option<(&WeatherObservation, Duration)> = None;
            // Candidate before (or at) t first, so ties keep the earlier one.
            if after > 0 {
                let w = obs[after - 1];
                best = Some((w, t - w.timestamp));
            }
            if let Some(&w) = obs.get(after) {
                let d = w.timestamp - t;
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((w, d));
                }
            }
            best.filter(|(_, d)| *d <= tol).map(|(w, _)| WeatherReading {
                temperature_c: w.temperature_c,
                rain_mm: w.rain_mm,
                rel_humidity_pct: w.rel_humidity_pct,
            })
        })
        .collect()
}

/// Point at `distance_m` from `origin` along the initial bearing (radians,
/// clockwise from north) on the haversine sphere.
pub fn destination_point(origin: (f64, f64), bearing: f64, distance_m: f64) -> (f64, f64) {
    let lat1 = origin.0.to_radians();
    let lon1 = origin.1.to_radians();
    let ang = distance_m / EARTH_RADIUS_M;
    let lat2 = (lat1.sin() * ang.cos() + lat1.cos() * ang.sin() * bearing.cos()).asin();
    let lon2 = lon1 + (bearing.sin() * ang.sin() * lat1.cos()).atan2(ang.cos() - lat1.sin() * lat2.sin());
    (lat2.to_degrees(), lon2.to_degrees())
}
