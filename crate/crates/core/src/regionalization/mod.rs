//! Contiguous regionalization of the stop network.
//!
//! Stops are linked by a Gabriel graph, grouped into Max-p regions whose
//! average-ridership sums reach a threshold `τ(k) = Σ r̄ / k`, and the
//! partition with the best Calinski–Harabasz index over a grid of `k` wins.

pub mod maxp;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::ingestion::{haversine_m, ApcStopEvent};
pub use maxp::{maxp, wgss};

/// Offset, in degrees, applied to repeated coordinates before building the
/// Gabriel graph.
pub const DUPLICATE_JITTER_DEG: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("need at least 2 stops, got {0}")]
    TooFewStops(usize),
    #[error("graph has {nodes} nodes but {loads} loads were given")]
    LengthMismatch { nodes: usize, loads: usize },
    #[error("load {value} at node {index} is negative or not finite")]
    BadLoad { index: usize, value: f64 },
    #[error("scaling factor k must be positive, got {0}")]
    NonPositiveK(i64),
    #[error("total load {total} is below the threshold {tau}")]
    Infeasible { total: f64, tau: f64 },
    #[error("contiguity graph is not connected")]
    Disconnected,
    #[error("Calinski-Harabasz index undefined for p = {p} regions over n = {n} stops")]
    UndefinedIndex { p: usize, n: usize },
    #[error("no k in the grid produced at least two regions")]
    NoSelectablePartition,
    #[error("k grid is empty")]
    EmptyGrid,
}

/// Undirected adjacency over stops `0..n`, neighbor lists sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContiguityGraph {
    pub adj: Vec<Vec<usize>>,
}

impl ContiguityGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        ContiguityGraph { adj }
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, nb) in self.adj.iter().enumerate() {
            out.extend(nb.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.adj.is_empty() || self.reach(0, |_| true) == self.adj.len()
    }

    /// Number of nodes reachable from `start` through nodes accepted by `keep`.
    pub fn reach(&self, start: usize, keep: impl Fn(usize) -> bool) -> usize {
        let mut seen = vec![false; self.adj.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if !seen[w] && keep(w) {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count
    }
}

/// Moves each repeated `(lat, lon)` north by a multiple of the jitter so that
/// every point is distinct. The first occurrence keeps its position.
pub fn jitter_duplicates(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    points
        .iter()
        .map(|&(lat, lon)| {
            let count = seen.entry((lat.to_bits(), lon.to_bits())).or_insert(0);
            let shifted = (lat + *count as f64 * DUPLICATE_JITTER_DEG, lon);
            *count += 1;
            shifted
        })
        .collect()
}

pub fn distance_matrix(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = haversine_m(points[i], points[j]);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    d
}

/// The Gabriel test for one pair: `w` lies strictly inside the circle with
/// diameter `uv`. Points on the circle do not block the edge.
#[inline]
pub fn blocks(d_uw: f64, d_wv: f64, d_uv: f64) -> bool {
    d_uw * d_uw + d_wv * d_wv < d_uv * d_uv
}

/// Gabriel graph under haversine distances. Duplicate coordinates are
/// jittered first (see [`jitter_duplicates`]).
pub fn gabriel_graph(points: &[(f64, f64)]) -> Result<ContiguityGraph, RegionError> {
    let n = points.len();
    if n < 2 {
        return Err(RegionError::TooFewStops(n));
    }
    let d = distance_matrix(&jitter_duplicates(points));
    // Any blocking point w satisfies d(u, w) < d(u, v), so only a prefix of
    // u's neighbors sorted by distance needs checking.
    let by_distance: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut idx: Vec<usize> = (0..n).filter(|&w| w != u).collect();
            idx.sort_by(|&a, &b| d[u][a].total_cmp(&d[u][b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let duv = d[u][v];
            let blocked = by_distance[u]
                .iter()
                .take_while(|&&w| d[u][w] <= duv)
                .any(|&w| w != v && blocks(d[u][w], d[w][v], duv));
            if !blocked {
                edges.push((u, v));
            }
        }
    }
    Ok(ContiguityGraph::from_edges(n, edges))
}

/// `τ(k) = Σ loads / k`.
pub fn tau(loads: &[f64], k: i64) -> Result<f64, RegionError> {
    if k <= 0 {
        return Err(RegionError::NonPositiveK(k));
    }
    Ok(loads.iter().sum::<f64>() / k as f64)
}

/// Average ridership `r̄` of every stop over the given events, by stop code.
pub fn stop_loads(events: &[ApcStopEvent]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, (i64, usize)> = BTreeMap::new();
    for e in events {
        let a = acc.entry(&e.stop_code).or_default();
        a.0 += e.continuing;
        a.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k.to_string(), s as f64 / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    /// Region of each node, ids `0..p` in order of first appearance.
    pub region_of: Vec<usize>,
    pub p: usize,
    pub tau: f64,
    pub region_sums: Vec<f64>,
    pub wgss: f64,
}

impl Partition {
    /// Every node in one region.
    pub fn single(n: usize, loads: &[f64]) -> Self {
        let total: f64 = loads.iter().sum();
        Partition {
            region_of: vec![0; n],
            p: 1,
            tau: total,
            region_sums: vec![total],
            wgss: wgss(&vec![0; n], 1, loads),
        }
    }

    pub fn members(&self, region: usize) -> Vec<usize> {
        (0..self.region_of.len()).filter(|&i| self.region_of[i] == region).collect()
    }

    /// Contiguity and threshold checks, for tests and sanity assertions.
    pub fn is_feasible(&self, graph: &ContiguityGraph, loads: &[f64]) -> bool {
        (0..self.p).all(|r| {
            let members = self.members(r);
            let sum: f64 = members.iter().map(|&i| loads[i]).sum();
            !members.is_empty()
                && sum >= self.tau
                && graph.reach(members[0], |w| self.region_of[w] == r) == members.len()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChIndex {
    pub value: f64,
    /// WGSS was zero and `value` is +∞.
    pub degenerate: bool,
}

/// Calinski–Harabasz index of a labeling of the scalar `values`.
pub fn ch_index(region_of: &[usize], p: usize, values: &[f64]) -> Result<ChIndex, RegionError> {
    let n = values.len();
    if p < 2 || p + 1 > n {
        return Err(RegionError::UndefinedIndex { p, n });
    }
    let grand = values.iter().sum::<f64>() / n as f64;
    let mut sum = vec![0.0; p];
    let mut count = vec![0usize; p];
    for (i, &r) in region_of.iter().enumerate() {
        sum[r] += values[i];
        count[r] += 1;
    }
    let bgss: f64 = (0..p)
        .filter(|&r| count[r] > 0)
        .map(|r| {
            let d = sum[r] / count[r] as f64 - grand;
            count[r] as f64 * d * d
        })
        .sum();
    let w = wgss(region_of, p, values);
    if w == 0.0 {
        return Ok(ChIndex { value: f64::INFINITY, degenerate: true });
    }
    Ok(ChIndex { value: (bgss / (p - 1) as f64) / (w / (n - p) as f64), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: i64,
    pub tau: f64,
    pub p: usize,
    pub ch: Option<f64>,
    pub wgss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: i64,
    pub partition: Partition,
    pub ch: ChIndex,
    pub sweep: Vec<SweepRow>,
}

/// Runs Max-p for every `k` and keeps the partition with the largest CH
/// index; ties go to the smaller `k`.
pub fn select_partition(
    graph: &ContiguityGraph,
    loads: &[f64],
    k_grid: &[i64],
    seed: u64,
) -> Result<Selection, RegionError> {
    if k_grid.is_empty() {
        return Err(RegionError::EmptyGrid);
    }
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut sweep = Vec::new();
    let mut best: Option<(i64, Partition, ChIndex)> = None;
    for k in ks {
        let t = tau(loads, k)?;
        let part = maxp(graph, loads, t, seed)?;
        let ch = ch_index(&part.region_of, part.p, loads).ok();
        sweep.push(SweepRow { k, tau: t, p: part.p, ch: ch.map(|c| c.value), wgss: part.wgss });
        if let Some(c) = ch {
            if best.as_ref().map_or(true, |b| c.value > b.2.value) {
                best = Some((k, part, c));
            }
        }
    }
    let (k, partition, ch) = best.ok_or(RegionError::NoSelectablePartition)?;
    Ok(Selection { k, partition, ch, sweep })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&m| c2(m)).sum();
    let sa: f64 = rows.values().map(|&m| c2(m)).sum();
    let sb: f64 = cols.values().map(|&m| c2(m)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

#[derive(Serialize)]
struct PartitionRow<'a> {
    stop_code: &'a str,
    region_id: usize,
    k: i64,
    tau: f64,
    region_sum: f64,
}

pub fn write_partition<W: Write>(writer: W, stops: &[String], sel: &Selection) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    let part = &sel.partition;
    for (i, s) in stops.iter().enumerate() {
        let r = part.region_of[i];
        wtr.serialize(PartitionRow {
            stop_code: s,
            region_id: r,
            k: sel.k,
            tau: part.tau,
            region_sum: part.region_sums[r],
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_one_edge() {
        let g = gabriel_graph(&[(31.0, 34.0), (31.01, 34.0)]).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        assert!(gabriel_graph(&[(31.0, 34.0)]).is_err());
    }

    #[test]
    fn collinear_middle_point_blocks() {
        let g = gabriel_graph(&[(31.0, 34.0), (31.01, 34.0), (31.02, 34.0)]).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicates_are_separated() {
        let pts = jitter_duplicates(&[(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)]);
        assert_eq!(pts[0], (1.0, 2.0));
        assert!(pts[1] != pts[0] && pts[2] != pts[1]);
        assert!(gabriel_graph(&[(1.0, 2.0), (1.0, 2.0)]).unwrap().is_connected());
    }

    #[test]
    fn tau_cases() {
        assert_eq!(tau(&[500.0, 500.0], 10).unwrap(), 100.0);
        assert_eq!(tau(&[2.0, 4.0, 6.0], 4).unwrap(), 3.0);
        assert_eq!(tau(&[2.0, 4.0, 6.0], 1).unwrap(), 12.0);
        assert_eq!(tau(&[1.0], 0), Err(RegionError::NonPositiveK(0)));
    }

    #[test]
    fn ch_cases() {
        let ch = ch_index(&[0, 0, 1, 1], 2, &[0.0, 0.0, 10.0, 10.0]).unwrap();
        assert!(ch.degenerate && ch.value.is_infinite());
        assert!(ch_index(&[0, 0, 0], 1, &[1.0, 2.0, 3.0]).is_err());
        assert!(ch_index(&[0, 1, 2], 3, &[1.0, 2.0, 3.0]).is_err());
        // {0,2},{10,14}: grand 6.5, BGSS = 2·5.5² + 2·5.5² = 121, WGSS = 2 + 8 = 10.
        let ch = ch_index(&[0, 0, 1, 1], 2, &[0.0, 2.0, 10.0, 14.0]).unwrap();
        assert!((ch.value - 121.0 / (10.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn selection_needs_two_regions() {
        let g = ContiguityGraph::from_edges(3, [(0, 1), (1, 2)]);
        assert_eq!(select_partition(&g, &[1.0, 2.0, 3.0], &[1], 0), Err(RegionError::NoSelectablePartition));
        assert_eq!(select_partition(&g, &[1.0, 2.0, 3.0], &[], 0), Err(RegionError::EmptyGrid));
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 3, 3]), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(v < 0.0);
    }
}
