//! Synthetic city with planted structure, used by tests and demos.
//!
//! Two spatial clusters of stops sit 6 km apart. Cluster A holds a third of
//! the stops, cluster B the rest; each cluster is served by its own routes,
//! which run the full cluster corridor in both directions. Route demand
//! multipliers are chosen so that both clusters carry the same total load
//! while per-stop averages differ by a factor of two, which is what a
//! threshold-driven regionalization has to discover.
//!
//! Per trip, the expected on-board load is
//! `base × route multiplier × diurnal(hour) × day type × weather`. Riders
//! alight with probability `1/L` per stop (L = route mean ride length) and
//! board at rate `load/L`, so the load profile along a trip stays flat around
//! that expectation. Loads never exceed [`CAPACITY`].
//!
//! After generation, three kinds of bad ride are injected at the configured
//! rates and recorded in the ground truth: a negative `continuing` value at one
//! stop, a boarding count above capacity at one stop, and a boarding/alighting
//! discrepancy (every alighting scaled by 0.4, only on rides with at least 20
//! boardings so the discrepancy is unambiguous).

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::ingestion::{
    destination_point, haversine_m, write_apc, write_facilities, write_holidays, write_stops, write_weather,
    ApcStopEvent, Facility, FacilityKind, HolidayCalendar, IngestError, StopRecord, WeatherObservation,
};

pub const CAPACITY: i64 = 50;
const CENTER: (f64, f64) = (31.25, 34.79);
const CLUSTER_OFFSET_M: f64 = 3_000.0;
const MIN_STOP_SPACING_M: f64 = 60.0;
const BASE_LOAD: f64 = 8.0;
const SECONDS_PER_STOP: i64 = 90;
const REST_DAY_FACTOR: f64 = 0.55;
const RAIN_FACTOR: f64 = 0.75;
const DISCREPANCY_SCALE: f64 = 0.4;
const DISCREPANCY_MIN_BOARDINGS: i64 = 20;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic city: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_stops: usize,
    /// Total route count, split evenly between the two clusters.
    pub n_routes: usize,
    pub days: u32,
    pub seed: u64,
    pub start: NaiveDate,
    pub headway_min: u32,
    pub negative_rate: f64,
    pub capacity_rate: f64,
    pub discrepancy_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_stops: 120,
            n_routes: 4,
            days: 60,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            headway_min: 180,
            negative_rate: 0.05,
            capacity_rate: 0.01,
            discrepancy_rate: 0.02,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Spec(m.to_string()));
        if self.n_stops < 6 {
            return bad("n_stops must be at least 6");
        }
        if self.n_routes < 2 || self.n_routes % 2 != 0 {
            return bad("n_routes must be an even number of at least 2");
        }
        if self.days == 0 {
            return bad("days must be positive");
        }
        if self.headway_min == 0 {
            return bad("headway_min must be positive");
        }
        let rates = [self.negative_rate, self.capacity_rate, self.discrepancy_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0 {
            return bad("injection rates must lie in [0, 1] and sum to at most 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedKind {
    Negative,
    Capacity,
    Discrepancy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InjectedRide {
    pub trip_key: String,
    pub kind: InjectedKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopCluster {
    pub stop_code: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteTruth {
    pub route_id: String,
    pub cluster: usize,
    pub multiplier: f64,
    pub mean_ride_length: u32,
    pub stops: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub injected: Vec<InjectedRide>,
    pub clusters: Vec<StopCluster>,
    pub routes: Vec<RouteTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub stops: Vec<StopRecord>,
    pub facilities: Vec<Facility>,
    pub holidays: HolidayCalendar,
    pub weather: Vec<WeatherObservation>,
    pub apc: Vec<ApcStopEvent>,
    pub truth: GroundTruth,
}

fn diurnal(hour: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((hour - c) / w).powi(2)).exp();
    0.5 + 1.0 * bump(7.5, 1.5) + 0.9 * bump(16.5, 1.8)
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> i64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as i64
}

fn binomial(rng: &mut ChaCha8Rng, n: i64, p: f64) -> i64 {
    if n <= 0 {
        return 0;
    }
    Binomial::new(n as u64, p).expect("valid probability").sample(rng) as i64
}

fn scatter(
    rng: &mut ChaCha8Rng,
    center: (f64, f64),
    radius: f64,
    n: usize,
    taken: &mut Vec<(f64, f64)>,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let bearing = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = radius * rng.gen::<f64>().sqrt();
        let p = destination_point(center, bearing, dist);
        if taken.iter().all(|&q| haversine_m(p, q) >= MIN_STOP_SPACING_M) {
            taken.push(p);
            out.push(p);
        }
    }
    out
}

/// Greedy nearest-neighbor tour through `members`, starting at the westmost.
fn corridor(points: &[(f64, f64)], members: &[usize]) -> Vec<usize> {
    let mut left: Vec<usize> = members.to_vec();
    let start = (0..left.len()).min_by(|&a, &b| points[left[a]].1.total_cmp(&points[left[b]].1)).unwrap();
    let mut tour = vec![left.swap_remove(start)];
    while !left.is_empty() {
        let cur = points[*tour.last().unwrap()];
        let next = (0..left.len())
            .min_by(|&a, &b| haversine_m(cur, points[left[a]]).total_cmp(&haversine_m(cur, points[left[b]])))
            .unwrap();
        tour.push(left.swap_remove(next));
    }
    tour
}

struct DayWeather {
    temp_offset: f64,
    rain: Option<(f64, f64, f64)>,
}

impl DayWeather {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let temp_offset = rng.gen_range(-3.0..3.0);
        let rain = if rng.gen_bool(0.3) {
            let start = rng.gen_range(0.0..20.0);
            let len = rng.gen_range(2.0..6.0);
            Some((start, start + len, rng.gen_range(0.5..3.0)))
        } else {
            None
        };
        DayWeather { temp_offset, rain }
    }

    fn at(&self, hour: f64) -> (f64, f64) {
        let temp = 14.0 + self.temp_offset + 7.0 * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin();
        let rain = match self.rain {
            Some((a, b, mm)) if hour >= a && hour < b => mm,
            _ => 0.0,
        };
        (temp, rain)
    }
}

fn hour_of(t: NaiveDateTime) -> f64 {
    let secs = (t - t.date().and_hms_opt(0, 0, 0).unwrap()).num_seconds();
    secs as f64 / 3600.0
}

struct Route {
    id: String,
    cluster: usize,
    multiplier: f64,
    ride_length: u32,
    path: Vec<usize>,
    offset_min: i64,
}

pub fn generate_synthetic_city(spec: &SynthSpec) -> Result<SyntheticCity, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Geometry: cluster A to the west, B to the east.
    let n_a = spec.n_stops / 3;
    let n_b = spec.n_stops - n_a;
    let centers = [
        destination_point(CENTER, 1.5 * std::f64::consts::PI, CLUSTER_OFFSET_M),
        destination_point(CENTER, 0.5 * std::f64::consts::PI, CLUSTER_OFFSET_M),
    ];
    let radius = |n: usize| 120.0 * (n as f64).sqrt() + 200.0;
    let mut taken = Vec::new();
    let mut points = scatter(&mut rng, centers[0], radius(n_a), n_a, &mut taken);
    points.extend(scatter(&mut rng, centers[1], radius(n_b), n_b, &mut taken));
    let cluster_of: Vec<usize> = (0..spec.n_stops).map(|i| usize::from(i >= n_a)).collect();

    // Stop codes are shuffled so that they carry no cluster information.
    let mut codes: Vec<String> = (1..=spec.n_stops).map(|i| format!("S{i:04}")).collect();
    codes.shuffle(&mut rng);

    let stops: Vec<StopRecord> = (0..spec.n_stops)
        .map(|i| {
            let socio = if rng.gen_bool(0.05) {
                None
            } else if cluster_of[i] == 0 {
                Some(rng.gen_range(6..=9))
            } else {
                Some(rng.gen_range(2..=5))
            };
            StopRecord {
                stop_code: codes[i].clone(),
                lat: points[i].0,
                lon: points[i].1,
                neighborhood: if cluster_of[i] == 0 { "west".into() } else { "east".into() },
                socio_score: socio,
            }
        })
        .collect();

    let mut facilities = Vec::new();
    for &p in &points {
        for _ in 0..poisson(&mut rng, 1.5) {
            let kind = *FacilityKind::ALL.choose(&mut rng).unwrap();
            let loc = destination_point(p, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..300.0));
            facilities.push(Facility { kind, lat: loc.0, lon: loc.1 });
        }
    }

    // Routes: per cluster, multipliers spread linearly from high to low;
    // cluster B runs at half the level of cluster A.
    let per_cluster = spec.n_routes / 2;
    let mut routes = Vec::new();
    for cluster in 0..2 {
        let members: Vec<usize> = (0..spec.n_stops).filter(|&i| cluster_of[i] == cluster).collect();
        let path = corridor(&points, &members);
        for j in 0..per_cluster {
            let level = if per_cluster == 1 { 2.0 } else { 3.0 - 2.0 * j as f64 / (per_cluster - 1) as f64 };
            let idx = routes.len();
            routes.push(Route {
                id: format!("R{}", idx + 1),
                cluster,
                multiplier: if cluster == 0 { level } else { level / 2.0 },
                ride_length: rng.gen_range(4..=10),
                path: path.clone(),
                offset_min: (idx as i64 * 17) % 60,
            });
        }
    }

    let dates: Vec<NaiveDate> = (0..spec.days).map(|d| spec.start + Duration::days(d as i64)).collect();
    let holidays =
        HolidayCalendar { dates: dates.iter().enumerate().filter(|(d, _)| d % 30 == 9).map(|(_, &x)| x).collect() };
    let day_weather: Vec<DayWeather> = dates.iter().map(|_| DayWeather::draw(&mut rng)).collect();

    let mut weather = Vec::new();
    for (date, dw) in dates.iter().zip(&day_weather) {
        for slot in 0..144 {
            let t = date.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(slot * 10);
            let (temp, rain) = dw.at(hour_of(t));
            let humidity =
                (55.0 - 1.5 * (temp - 14.0) + if rain > 0.0 { 30.0 } else { 0.0 } + rng.gen_range(-5.0..5.0))
                    .clamp(5.0, 100.0);
            weather.push(WeatherObservation {
                timestamp: t,
                temperature_c: round1(temp),
                rain_mm: round1(rain),
                rel_humidity_pct: round1(humidity),
            });
        }
    }

    let service_start = NaiveTime::from_hms_opt(6, 0, 0).unwrap();
    let last_departure_h = 21.0;
    let mut apc = Vec::new();
    let mut injected = Vec::new();
    for (date, dw) in dates.iter().zip(&day_weather) {
        let rest = matches!(date.weekday(), chrono::Weekday::Fri | chrono::Weekday::Sat) || holidays.contains(*date);
        for route in &routes {
            for direction in 0..2 {
                let stops_in_order: Vec<usize> =
                    if direction == 0 { route.path.clone() } else { route.path.iter().rev().copied().collect() };
                let mut start =
                    date.and_time(service_start) + Duration::minutes(route.offset_min + 7 * direction as i64);
                while hour_of(start) <= last_departure_h && start.date() == *date {
                    let h = hour_of(start);
                    let (temp, rain) = dw.at(h);
                    let mut mu = BASE_LOAD * route.multiplier * diurnal(h);
                    if rest {
                        mu *= REST_DAY_FACTOR;
                    }
                    if rain > 0.0 {
                        mu *= RAIN_FACTOR;
                    }
                    mu *= 1.0 + 0.01 * (temp - 15.0);
                    let trip_key =
                        format!("{}-{}-{}-{}", route.id, direction, date.format("%Y%m%d"), start.format("%H%M"));
                    let first = apc.len();
                    let l = route.ride_length as f64;
                    let mut load: i64 = 0;
                    let last = stops_in_order.len() - 1;
                    for (seq, &stop) in stops_in_order.iter().enumerate() {
                        let (b, a) = if seq == 0 {
                            (poisson(&mut rng, mu).min(CAPACITY), 0)
                        } else if seq == last {
                            let stay = load.min(i64::from(rng.gen_bool(0.5)));
                            (0, load - stay)
                        } else {
                            let a = binomial(&mut rng, load, 1.0 / l);
                            let b = poisson(&mut rng, mu / l).min(CAPACITY - (load - a));
                            (b, a)
                        };
                        load = load - a + b;
                        apc.push(ApcStopEvent {
                            route_id: route.id.clone(),
                            direction: direction.to_string(),
                            alternative: "A".into(),
                            trip_key: trip_key.clone(),
                            departure_time: start + Duration::seconds(SECONDS_PER_STOP * seq as i64),
                            weekday: date.weekday(),
                            stop_code: codes[stop].clone(),
                            stop_sequence: seq as u32 + 1,
                            boardings: b,
                            alightings: a,
                            continuing: load,
                        });
                    }
                    let ride = &mut apc[first..];
                    let u: f64 = rng.gen();
                    let kind = if u < spec.negative_rate {
                        let at = rng.gen_range(0..ride.len());
                        ride[at].continuing = -rng.gen_range(1..=3);
                        Some(InjectedKind::Negative)
                    } else if u < spec.negative_rate + spec.capacity_rate {
                        let at = rng.gen_range(0..ride.len());
                        ride[at].boardings = rng.gen_range(CAPACITY + 1..=CAPACITY + 10);
                        Some(InjectedKind::Capacity)
                    } else if u < spec.negative_rate + spec.capacity_rate + spec.discrepancy_rate
                        && ride.iter().map(|e| e.boardings).sum::<i64>() >= DISCREPANCY_MIN_BOARDINGS
                    {
                        for e in ride.iter_mut() {
                            e.alightings = (e.alightings as f64 * DISCREPANCY_SCALE).round() as i64;
                        }
                        Some(InjectedKind::Discrepancy)
                    } else {
                        None
                    };
                    if let Some(kind) = kind {
                        injected.push(InjectedRide { trip_key, kind });
                    }
                    start += Duration::minutes(spec.headway_min as i64);
                }
            }
        }
    }

    let truth = GroundTruth {
        injected,
        clusters: (0..spec.n_stops)
            .map(|i| StopCluster { stop_code: codes[i].clone(), cluster: cluster_of[i] })
            .collect(),
        routes: routes
            .iter()
            .map(|r| RouteTruth {
                route_id: r.id.clone(),
                cluster: r.cluster,
                multiplier: r.multiplier,
                mean_ride_length: r.ride_length,
                stops: r.path.len(),
            })
            .collect(),
    };
    Ok(SyntheticCity { stops, facilities, holidays, weather, apc, truth })
}

fn serialize_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SynthError> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

impl SyntheticCity {
    /// Writes the five input tables into `dir` and the ground truth into
    /// `dir/truth`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let truth_dir = dir.join("truth");
        fs::create_dir_all(&truth_dir)?;
        let create = |name: &str| -> Result<BufWriter<fs::File>, SynthError> {
            Ok(BufWriter::new(fs::File::create(dir.join(name))?))
        };
        write_apc(create("apc.csv")?, &self.apc)?;
        write_weather(create("weather.csv")?, &self.weather)?;
        write_stops(create("stops.csv")?, &self.stops)?;
        write_facilities(create("facilities.csv")?, &self.facilities)?;
        write_holidays(create("holidays.csv")?, &self.holidays)?;
        serialize_rows(&truth_dir.join("injected.csv"), &self.truth.injected)?;
        serialize_rows(&truth_dir.join("clusters.csv"), &self.truth.clusters)?;
        serialize_rows(&truth_dir.join("routes.csv"), &self.truth.routes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small() -> SynthSpec {
        SynthSpec { n_stops: 24, days: 5, seed: 3, ..SynthSpec::default() }
    }

    #[test]
    fn degenerate_specs_rejected() {
        for spec in [
            SynthSpec { n_stops: 3, ..small() },
            SynthSpec { n_routes: 3, ..small() },
            SynthSpec { days: 0, ..small() },
            SynthSpec { negative_rate: 0.9, discrepancy_rate: 0.2, ..small() },
        ] {
            assert!(matches!(generate_synthetic_city(&spec), Err(SynthError::Spec(_))));
        }
    }

    #[test]
    fn clean_rides_respect_capacity_and_balance() {
        let city = generate_synthetic_city(&small()).unwrap();
        let bad: HashSet<&str> = city.truth.injected.iter().map(|r| r.trip_key.as_str()).collect();
        let mut by_trip: std::collections::BTreeMap<&str, (i64, i64)> = Default::default();
        for e in city.apc.iter().filter(|e| !bad.contains(e.trip_key.as_str())) {
            assert!((0..=CAPACITY).contains(&e.boardings));
            assert!((0..=CAPACITY).contains(&e.alightings));
            assert!((0..=CAPACITY).contains(&e.continuing));
            let t = by_trip.entry(&e.trip_key).or_default();
            t.0 += e.boardings;
            t.1 += e.alightings;
        }
        assert!(by_trip.values().all(|(b, a)| (b - a) == 0 || (b - a) == 1));
    }

    #[test]
    fn same_seed_same_city() {
        assert_eq!(generate_synthetic_city(&small()).unwrap(), generate_synthetic_city(&small()).unwrap());
        let other = generate_synthetic_city(&SynthSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(other.apc, generate_synthetic_city(&small()).unwrap().apc);
    }

    #[test]
    fn cluster_a_stops_carry_heavier_average_load() {
        let city = generate_synthetic_city(&small()).unwrap();
        let cluster: std::collections::HashMap<&str, usize> =
            city.truth.clusters.iter().map(|c| (c.stop_code.as_str(), c.cluster)).collect();
        let mut sum = [0.0; 2];
        let mut count = [0.0; 2];
        for e in &city.apc {
            let c = cluster[e.stop_code.as_str()];
            sum[c] += e.continuing.max(0) as f64;
            count[c] += 1.0;
        }
        assert!(sum[0] / count[0] > 1.5 * sum[1] / count[1]);
    }
}
