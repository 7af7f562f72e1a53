//! Hourly snapshot graphs of the stop network and the features drawn from them.
//!
//! A snapshot pools every training trip that departs a stop during one hour of
//! the day. Edge `(u, v)` exists when some trip visits `v` right after `u`, and
//! the passenger weights of that edge are the counts recorded at the upstream
//! stop `u` (boardings, alightings, and the load carried from `u` to `v`).

pub mod centrality;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use chrono::Timelike;
use rayon::prelude::*;
use serde::Serialize;

use crate::ingestion::{haversine_m, ApcStopEvent};
use crate::stats::{mean, median, population_std, Summary};
pub use centrality::DiGraph;

pub const HOURS: usize = 24;

/// Integer running sums for one count series; avg and std are derived at the
/// end so the result does not depend on accumulation order.
#[derive(Debug, Clone, Copy, Default)]
struct CountAcc {
    n: i64,
    sum: i64,
    sum_sq: i128,
}

impl CountAcc {
    fn push(&mut self, x: i64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += (x as i128) * (x as i128);
    }

    fn avg(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum as f64 / self.n as f64
        }
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        // n·Σx² − (Σx)² is exact in integers.
        let n = self.n as i128;
        let num = n * self.sum_sq - (self.sum as i128) * (self.sum as i128);
        ((num as f64) / ((n * n) as f64)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeWeights {
    pub routes: u32,
    pub distance_m: f64,
    pub board_sum: i64,
    pub board_avg: f64,
    pub board_std: f64,
    pub alight_sum: i64,
    pub alight_avg: f64,
    pub alight_std: f64,
    pub cont_sum: i64,
    pub cont_avg: f64,
    pub cont_std: f64,
    pub freq: u32,
    pub freq_bin: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEdge {
    pub from: String,
    pub to: String,
    pub weights: EdgeWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    pub hour: u8,
    /// Sorted stop codes.
    pub nodes: Vec<String>,
    /// Sorted by `(from, to)`.
    pub edges: Vec<SnapshotEdge>,
}

impl NetworkSnapshot {
    pub fn node_index(&self, stop: &str) -> Option<usize> {
        self.nodes.binary_search_by(|s| s.as_str().cmp(stop)).ok()
    }

    pub fn graph(&self) -> DiGraph {
        DiGraph::new(
            self.nodes.len(),
            self.edges.iter().map(|e| (self.node_index(&e.from).unwrap(), self.node_index(&e.to).unwrap())),
        )
    }
}

/// Events of each trip sorted by stop sequence, trips ordered by key.
pub fn trips(events: &[ApcStopEvent]) -> Vec<Vec<&ApcStopEvent>> {
    let mut by_trip: BTreeMap<&str, Vec<&ApcStopEvent>> = BTreeMap::new();
    for e in events {
        by_trip.entry(&e.trip_key).or_default().push(e);
    }
    by_trip
        .into_values()
        .map(|mut t| {
            t.sort_by_key(|e| e.stop_sequence);
            t
        })
        .collect()
}

pub type Coords = HashMap<String, (f64, f64)>;

fn stop_distance(coords: &Coords, a: &str, b: &str) -> f64 {
    match (coords.get(a), coords.get(b)) {
        (Some(&pa), Some(&pb)) => haversine_m(pa, pb),
        _ => f64::NAN,
    }
}

#[derive(Default)]
struct EdgeAcc {
    routes: BTreeSet<String>,
    board: CountAcc,
    alight: CountAcc,
    cont: CountAcc,
}

/// Builds the snapshot of every hour of the day from `events`.
pub fn build_snapshots(events: &[ApcStopEvent], coords: &Coords) -> Vec<NetworkSnapshot> {
    let mut nodes: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); HOURS];
    let mut edges: Vec<BTreeMap<(&str, &str), EdgeAcc>> = (0..HOURS).map(|_| BTreeMap::new()).collect();
    for e in events {
        nodes[e.departure_time.hour() as usize].insert(&e.stop_code);
    }
    for trip in trips(events) {
        for pair in trip.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if u.stop_code == v.stop_code {
                continue;
            }
            let h = u.departure_time.hour() as usize;
            nodes[h].insert(&v.stop_code);
            let acc = edges[h].entry((&u.stop_code, &v.stop_code)).or_default();
            if !acc.routes.contains(&u.route_id) {
                acc.routes.insert(u.route_id.clone());
            }
            acc.board.push(u.boardings);
            acc.alight.push(u.alightings);
            acc.cont.push(u.continuing);
        }
    }
    nodes
        .into_iter()
        .zip(edges)
        .enumerate()
        .map(|(h, (ns, es))| {
            let freqs: Vec<u32> = es.values().map(|a| a.cont.n as u32).collect();
            let bins = freq_bins(&freqs);
            let edges = es
                .into_iter()
                .zip(bins)
                .map(|(((u, v), a), bin)| SnapshotEdge {
                    from: u.to_string(),
                    to: v.to_string(),
                    weights: EdgeWeights {
                        routes: a.routes.len() as u32,
                        distance_m: stop_distance(coords, u, v),
                        board_sum: a.board.sum,
                        board_avg: a.board.avg(),
                        board_std: a.board.std(),
                        alight_sum: a.alight.sum,
                        alight_avg: a.alight.avg(),
                        alight_std: a.alight.std(),
                        cont_sum: a.cont.sum,
                        cont_avg: a.cont.avg(),
                        cont_std: a.cont.std(),
                        freq: a.cont.n as u32,
                        freq_bin: bin,
                    },
                })
                .collect();
            NetworkSnapshot { hour: h as u8, nodes: ns.into_iter().map(String::from).collect(), edges }
        })
        .collect()
}

pub fn build_snapshot(events: &[ApcStopEvent], hour: u8, coords: &Coords) -> NetworkSnapshot {
    build_snapshots(events, coords).swap_remove(hour as usize)
}

/// Equal-width binning of `[min, max]` into five categories numbered 1–5.
/// When every value is equal the bin is 3.
pub fn freq_bins(freqs: &[u32]) -> Vec<u8> {
    let (Some(&lo), Some(&hi)) = (freqs.iter().min(), freqs.iter().max()) else {
        return Vec::new();
    };
    if lo == hi {
        return vec![3; freqs.len()];
    }
    let width = (hi - lo) as f64 / 5.0;
    freqs.iter().map(|&f| (((f - lo) as f64 / width).floor() as u8 + 1).min(5)).collect()
}

/// Summaries over the edges of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightStats {
    pub cont: Summary,
    pub alight: Summary,
    pub board: Summary,
    pub freq_bin: Summary,
    pub distance: Summary,
}

pub fn network_weight_stats(s: &NetworkSnapshot) -> WeightStats {
    let col = |f: &dyn Fn(&EdgeWeights) -> f64| -> Summary {
        Summary::of(&s.edges.iter().map(|e| f(&e.weights)).collect::<Vec<_>>())
    };
    WeightStats {
        cont: col(&|w| w.cont_sum as f64),
        alight: col(&|w| w.alight_sum as f64),
        board: col(&|w| w.board_sum as f64),
        freq_bin: col(&|w| w.freq_bin as f64),
        distance: col(&|w| w.distance_m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteAggregate {
    pub board_sum: i64,
    pub board_avg: f64,
    pub board_std: f64,
    pub alight_sum: i64,
    pub alight_avg: f64,
    pub alight_std: f64,
    pub cont_sum: i64,
    pub cont_avg: f64,
    pub cont_std: f64,
    pub avg_distance_m: f64,
    pub freq: u32,
    pub freq_bin: u8,
}

/// Per-route aggregates over the route's stop events departing during `hour`.
/// Routes without events in that hour have no entry.
pub fn route_aggregates(events: &[ApcStopEvent], hour: u8, coords: &Coords) -> BTreeMap<String, RouteAggregate> {
    route_aggregates_all(events, coords).swap_remove(hour as usize)
}

pub fn route_aggregates_all(events: &[ApcStopEvent], coords: &Coords) -> Vec<BTreeMap<String, RouteAggregate>> {
    #[derive(Default)]
    struct Acc<'a> {
        board: CountAcc,
        alight: CountAcc,
        cont: CountAcc,
        trips: BTreeSet<&'a str>,
        dist_sum: f64,
        dist_n: usize,
    }
    let mut per_hour: Vec<BTreeMap<&str, Acc>> = (0..HOURS).map(|_| BTreeMap::new()).collect();
    for e in events {
        let acc = per_hour[e.departure_time.hour() as usize].entry(&e.route_id).or_default();
        acc.board.push(e.boardings);
        acc.alight.push(e.alightings);
        acc.cont.push(e.continuing);
        acc.trips.insert(&e.trip_key);
    }
    // Trips are visited in key order so the distance sums are reproducible.
    for trip in trips(events) {
        for pair in trip.windows(2) {
            let d = stop_distance(coords, &pair[0].stop_code, &pair[1].stop_code);
            if let Some(acc) = per_hour[pair[0].departure_time.hour() as usize].get_mut(pair[0].route_id.as_str()) {
                if d.is_finite() {
                    acc.dist_sum += d;
                    acc.dist_n += 1;
                }
            }
        }
    }
    per_hour
        .into_iter()
        .map(|routes| {
            let freqs: Vec<u32> = routes.values().map(|a| a.trips.len() as u32).collect();
            let bins = freq_bins(&freqs);
            routes
                .into_iter()
                .zip(bins)
                .map(|((route, a), bin)| {
                    (
                        route.to_string(),
                        RouteAggregate {
                            board_sum: a.board.sum,
                            board_avg: a.board.avg(),
                            board_std: a.board.std(),
                            alight_sum: a.alight.sum,
                            alight_avg: a.alight.avg(),
                            alight_std: a.alight.std(),
                            cont_sum: a.cont.sum,
                            cont_avg: a.cont.avg(),
                            cont_std: a.cont.std(),
                            avg_distance_m: if a.dist_n == 0 { f64::NAN } else { a.dist_sum / a.dist_n as f64 },
                            freq: a.trips.len() as u32,
                            freq_bin: bin,
                        },
                    )
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeCentralities {
    pub in_degree: f64,
    pub out_degree: f64,
    pub closeness: f64,
    pub betweenness: f64,
    pub eigenvector: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCentralities {
    pub nodes: Vec<NodeCentralities>,
    pub edge_betweenness: Vec<f64>,
    pub density: f64,
    pub avg_clustering: f64,
    pub eigen_converged: bool,
}

pub fn centralities(s: &NetworkSnapshot) -> SnapshotCentralities {
    let g = s.graph();
    let b = centrality::betweenness(&g);
    let c = centrality::closeness(&g);
    let e = centrality::eigenvector(&g);
    let nodes = (0..g.node_count())
        .map(|v| NodeCentralities {
            in_degree: g.in_degree(v) as f64,
            out_degree: g.out_degree(v) as f64,
            closeness: c[v],
            betweenness: b.node[v],
            eigenvector: e.values[v],
        })
        .collect();
    // Snapshot edges and graph edges share the same lexicographic order.
    SnapshotCentralities {
        nodes,
        edge_betweenness: b.edge,
        density: centrality::density(&g),
        avg_clustering: centrality::average_clustering(&g),
        eigen_converged: e.converged,
    }
}

pub const NODE_FEATURES: &[&str] =
    &["node_in_degree", "node_out_degree", "node_closeness", "node_betweenness", "node_eigenvector"];

pub const EDGE_FEATURES: &[&str] = &[
    "edge_routes",
    "edge_distance_m",
    "edge_board_sum",
    "edge_board_avg",
    "edge_board_std",
    "edge_alight_sum",
    "edge_alight_avg",
    "edge_alight_std",
    "edge_cont_sum",
    "edge_cont_avg",
    "edge_cont_std",
    "edge_freq",
    "edge_freq_bin",
    "edge_betweenness",
];

pub const ROUTE_FEATURES: &[&str] = &[
    "route_board_sum",
    "route_board_avg",
    "route_board_std",
    "route_alight_sum",
    "route_alight_avg",
    "route_alight_std",
    "route_cont_sum",
    "route_cont_avg",
    "route_cont_std",
    "route_avg_distance_m",
    "route_freq",
    "route_freq_bin",
];

const SUMMARY_STATS: [&str; 7] = ["mean", "median", "std", "min", "max", "sum", "count"];
const WEIGHT_QUANTITIES: [&str; 5] = ["cont", "alight", "board", "freq_bin", "distance"];
const CENTRALITY_QUANTITIES: [&str; 3] = ["betweenness", "closeness", "eigenvector"];
const CENTRALITY_STATS: [&str; 3] = ["mean", "median", "std"];

pub fn network_feature_names() -> Vec<String> {
    let mut names = vec!["net_density".to_string(), "net_avg_clustering".to_string()];
    for q in CENTRALITY_QUANTITIES {
        for s in CENTRALITY_STATS {
            names.push(format!("net_{q}_{s}"));
        }
    }
    for q in WEIGHT_QUANTITIES {
        for s in SUMMARY_STATS {
            names.push(format!("net_{q}_{s}"));
        }
    }
    names
}

pub fn graph_feature_names() -> Vec<String> {
    NODE_FEATURES
        .iter()
        .chain(EDGE_FEATURES)
        .chain(ROUTE_FEATURES)
        .map(|s| s.to_string())
        .chain(network_feature_names())
        .collect()
}

fn summary_values(s: &Summary) -> [f64; 7] {
    let v = |o: Option<f64>| o.unwrap_or(f64::NAN);
    [v(s.mean), v(s.median), v(s.std), v(s.min), v(s.max), v(s.sum), s.count as f64]
}

/// Everything one hour of the day contributes to an event's feature vector.
#[derive(Debug, Clone)]
pub struct HourContext {
    pub snapshot: NetworkSnapshot,
    pub centralities: SnapshotCentralities,
    pub routes: BTreeMap<String, RouteAggregate>,
    network: Vec<f64>,
}

impl HourContext {
    fn new(snapshot: NetworkSnapshot, routes: BTreeMap<String, RouteAggregate>) -> Self {
        let centralities = centralities(&snapshot);
        let stats = network_weight_stats(&snapshot);
        let mut network = vec![centralities.density, centralities.avg_clustering];
        let cols: [Vec<f64>; 3] = [
            centralities.nodes.iter().map(|n| n.betweenness).collect(),
            centralities.nodes.iter().map(|n| n.closeness).collect(),
            centralities.nodes.iter().map(|n| n.eigenvector).collect(),
        ];
        for c in &cols {
            network.push(mean(c).unwrap_or(f64::NAN));
            network.push(median(c).unwrap_or(f64::NAN));
            network.push(population_std(c).unwrap_or(f64::NAN));
        }
        for s in [&stats.cont, &stats.alight, &stats.board, &stats.freq_bin, &stats.distance] {
            network.extend(summary_values(s));
        }
        HourContext { snapshot, centralities, routes, network }
    }

    fn edge_values(&self, from: &str, to: &str) -> Option<[f64; 14]> {
        let i = self.snapshot.edges.binary_search_by(|e| (e.from.as_str(), e.to.as_str()).cmp(&(from, to))).ok()?;
        let w = &self.snapshot.edges[i].weights;
        Some([
            w.routes as f64,
            w.distance_m,
            w.board_sum as f64,
            w.board_avg,
            w.board_std,
            w.alight_sum as f64,
            w.alight_avg,
            w.alight_std,
            w.cont_sum as f64,
            w.cont_avg,
            w.cont_std,
            w.freq as f64,
            w.freq_bin as f64,
            self.centralities.edge_betweenness[i],
        ])
    }
}

/// Per-hour graph context built from training events only.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub hours: Vec<HourContext>,
}

impl GraphContext {
    pub fn build(train: &[ApcStopEvent], coords: &Coords) -> Self {
        let snapshots = build_snapshots(train, coords);
        let routes = route_aggregates_all(train, coords);
        let hours = snapshots.into_par_iter().zip(routes).map(|(s, r)| HourContext::new(s, r)).collect();
        GraphContext { hours }
    }

    /// Graph features of one event, in [`graph_feature_names`] order. Anything
    /// the training data cannot provide is NaN, to be imputed downstream.
    pub fn features(&self, hour: u8, stop: &str, prev_stop: Option<&str>, route: &str, out: &mut Vec<f64>) {
        let ctx = &self.hours[hour as usize];
        match ctx.snapshot.node_index(stop) {
            Some(i) => {
                let n = &ctx.centralities.nodes[i];
                out.extend([n.in_degree, n.out_degree, n.closeness, n.betweenness, n.eigenvector]);
            }
            None => out.extend([f64::NAN; 5]),
        }
        match prev_stop.and_then(|p| ctx.edge_values(p, stop)) {
            Some(v) => out.extend(v),
            None => out.extend([f64::NAN; 14]),
        }
        match ctx.routes.get(route) {
            Some(r) => out.extend([
                r.board_sum as f64,
                r.board_avg,
                r.board_std,
                r.alight_sum as f64,
                r.alight_avg,
                r.alight_std,
                r.cont_sum as f64,
                r.cont_avg,
                r.cont_std,
                r.avg_distance_m,
                r.freq as f64,
                r.freq_bin as f64,
            ]),
            None => out.extend([f64::NAN; 12]),
        }
        out.extend_from_slice(&ctx.network);
    }
}

/// Edge list of one snapshot with all weights, for inspection.
pub fn write_snapshot_edges<W: Write>(writer: W, s: &NetworkSnapshot) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "hour",
        "from",
        "to",
        "routes",
        "distance_m",
        "board_sum",
        "board_avg",
        "board_std",
        "alight_sum",
        "alight_avg",
        "alight_std",
        "cont_sum",
        "cont_avg",
        "cont_std",
        "freq",
        "freq_bin",
    ])?;
    for e in &s.edges {
        let w = &e.weights;
        wtr.write_record([
            s.hour.to_string(),
            e.from.clone(),
            e.to.clone(),
            w.routes.to_string(),
            w.distance_m.to_string(),
            w.board_sum.to_string(),
            w.board_avg.to_string(),
            w.board_std.to_string(),
            w.alight_sum.to_string(),
            w.alight_avg.to_string(),
            w.alight_std.to_string(),
            w.cont_sum.to_string(),
            w.cont_avg.to_string(),
            w.cont_std.to_string(),
            w.freq.to_string(),
            w.freq_bin.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, Weekday};

    fn ev(
        route: &str,
        trip: &str,
        seq: u32,
        stop: &str,
        hour: u32,
        minute: u32,
        b: i64,
        a: i64,
        c: i64,
    ) -> ApcStopEvent {
        ApcStopEvent {
            route_id: route.into(),
            direction: "0".into(),
            alternative: "A".into(),
            trip_key: trip.into(),
            departure_time: NaiveDate::from_ymd_opt(2023, 1, 5).unwrap().and_hms_opt(hour, minute, 0).unwrap(),
            weekday: Weekday::Thu,
            stop_code: stop.into(),
            stop_sequence: seq,
            boardings: b,
            alightings: a,
            continuing: c,
        }
    }

    fn coords() -> Coords {
        [("A", (31.0, 34.0)), ("B", (31.001, 34.0)), ("C", (31.002, 34.0))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    #[test]
    fn single_trip_hand_trace() {
        let events = vec![
            ev("1", "t", 1, "A", 14, 0, 1, 0, 1),
            ev("1", "t", 2, "B", 14, 2, 0, 0, 1),
            ev("1", "t", 3, "C", 14, 4, 0, 1, 0),
        ];
        let s = build_snapshot(&events, 14, &coords());
        assert_eq!(s.edges.len(), 2);
        assert_eq!((s.edges[0].from.as_str(), s.edges[0].to.as_str()), ("A", "B"));
        for e in &s.edges {
            assert_eq!(e.weights.cont_sum, 1);
            assert_eq!(e.weights.cont_avg, 1.0);
            assert_eq!(e.weights.cont_std, 0.0);
            assert_eq!(e.weights.freq, 1);
            assert_eq!(e.weights.routes, 1);
            assert_eq!(e.weights.freq_bin, 3);
        }
        assert!((s.edges[0].weights.distance_m - haversine_m((31.0, 34.0), (31.001, 34.0))).abs() < 1e-9);
        assert!(build_snapshot(&events, 9, &coords()).edges.is_empty());

        let mut buf = Vec::new();
        write_snapshot_edges(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("hour,from,to,routes,distance_m"));
        assert!(lines[1].starts_with("14,A,B,1,"));
        assert!(lines[2].ends_with(",1,3"));
    }

    #[test]
    fn shared_segment_counts_routes() {
        let events = vec![
            ev("1", "t1", 1, "A", 8, 0, 2, 0, 2),
            ev("1", "t1", 2, "B", 8, 1, 0, 2, 0),
            ev("2", "t2", 1, "A", 8, 5, 4, 0, 4),
            ev("2", "t2", 2, "B", 8, 6, 0, 4, 0),
        ];
        let s = build_snapshot(&events, 8, &coords());
        let w = s.edges[0].weights;
        assert_eq!((w.routes, w.freq, w.cont_sum), (2, 2, 6));
        assert_eq!(w.cont_avg, 3.0);
        assert_eq!(w.cont_std, 1.0);
    }

    #[test]
    fn freq_bin_cases() {
        assert_eq!(freq_bins(&[4, 4, 4]), vec![3, 3, 3]);
        assert_eq!(freq_bins(&[7]), vec![3]);
        assert_eq!(freq_bins(&(1..=10).collect::<Vec<_>>()), vec![1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        assert!(freq_bins(&[]).is_empty());
    }

    #[test]
    fn weight_stats_cases() {
        let events = vec![ev("1", "t", 1, "A", 10, 0, 5, 0, 5), ev("1", "t", 2, "B", 10, 1, 0, 5, 0)];
        let s = build_snapshot(&events, 10, &coords());
        let st = network_weight_stats(&s);
        assert_eq!(st.cont.mean, Some(5.0));
        assert_eq!(st.cont.median, Some(5.0));
        assert_eq!(st.cont.min, Some(5.0));
        assert_eq!(st.cont.max, Some(5.0));
        assert_eq!(st.cont.sum, Some(5.0));
        assert_eq!(st.cont.std, Some(0.0));
        assert_eq!(st.cont.count, 1);
        let empty = build_snapshot(&events, 3, &coords());
        let es = network_weight_stats(&empty);
        assert_eq!(es.cont.count, 0);
        assert_eq!(es.distance.mean, None);
    }

    #[test]
    fn route_aggregate_cases() {
        let events = vec![
            ev("1", "t1", 1, "A", 7, 0, 4, 0, 4),
            ev("1", "t1", 2, "B", 7, 1, 0, 0, 4),
            ev("1", "t1", 3, "C", 7, 2, 0, 0, 4),
            ev("1", "t2", 1, "A", 7, 30, 4, 0, 4),
        ];
        let r = route_aggregates(&events, 7, &coords());
        let agg = r["1"];
        assert_eq!(agg.cont_avg, 4.0);
        assert_eq!(agg.cont_std, 0.0);
        assert_eq!(agg.freq, 2);
        assert!(route_aggregates(&events, 8, &coords()).is_empty());
    }

    #[test]
    fn context_marks_missing_inbound_edge() {
        let events = vec![ev("1", "t", 1, "A", 14, 0, 1, 0, 1), ev("1", "t", 2, "B", 14, 2, 0, 1, 0)];
        let ctx = GraphContext::build(&events, &coords());
        let names = graph_feature_names();
        let mut first = Vec::new();
        ctx.features(14, "A", None, "1", &mut first);
        assert_eq!(first.len(), names.len());
        let edge_start = NODE_FEATURES.len();
        assert!(first[edge_start..edge_start + EDGE_FEATURES.len()].iter().all(|v| v.is_nan()));
        let mut second = Vec::new();
        ctx.features(14, "B", Some("A"), "1", &mut second);
        assert_eq!(second[edge_start + 8], 1.0, "edge_cont_sum");
        let mut empty_hour = Vec::new();
        ctx.features(3, "B", Some("A"), "1", &mut empty_hour);
        assert!(empty_hour[..NODE_FEATURES.len() + EDGE_FEATURES.len() + ROUTE_FEATURES.len()]
            .iter()
            .all(|v| v.is_nan()));
    }
}
