//! Max-p heuristic: seeded greedy growth, enclave assignment, then
//! steepest-descent boundary moves, repeated over several restarts.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ContiguityGraph, Partition, RegionError};

pub const RESTARTS: u64 = 10;
pub const MAX_MOVES: usize = 1000;
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default)]
struct RegionStats {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl RegionStats {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn remove(&mut self, x: f64) {
        self.n -= 1;
        self.sum -= x;
        self.sum_sq -= x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn ss(&self) -> f64 {
        ss_of(self.n, self.sum, self.sum_sq)
    }
}

fn ss_of(n: usize, sum: f64, sum_sq: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum_sq - sum * sum / n as f64).max(0.0)
    }
}

/// Within-region sum of squared deviations from each region's mean, computed
/// directly (two-pass) rather than from running sums.
pub fn wgss(region_of: &[usize], p: usize, loads: &[f64]) -> f64 {
    let mut sum = vec![0.0; p];
    let mut n = vec![0usize; p];
    for (i, &r) in region_of.iter().enumerate() {
        sum[r] += loads[i];
        n[r] += 1;
    }
    region_of
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let d = loads[i] - sum[r] / n[r] as f64;
            d * d
        })
        .sum()
}

/// True when the members of `region` other than `skip` form one connected
/// piece of `graph`.
fn connected_without(graph: &ContiguityGraph, region_of: &[usize], region: usize, skip: usize, size: usize) -> bool {
    let start = match graph.adj[skip].iter().find(|&&w| region_of[w] == region) {
        Some(&s) => s,
        None => return size <= 1,
    };
    let mut seen = vec![false; region_of.len()];
    seen[skip] = true;
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &graph.adj[v] {
            if !seen[w] && region_of[w] == region {
                seen[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == size - 1
}

const UNASSIGNED: usize = usize::MAX;
const ENCLAVE: usize = usize::MAX - 1;

/// One construction plus local search. Returns `(region_of, p)`.
fn construct(graph: &ContiguityGraph, loads: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let n = loads.len();
    let mut region_of = vec![UNASSIGNED; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut stats: Vec<RegionStats> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for &seed in &order {
        if region_of[seed] != UNASSIGNED {
            continue;
        }
        let id = stats.len();
        members.clear();
        members.push(seed);
        region_of[seed] = id;
        let mut st = RegionStats::default();
        st.add(loads[seed]);
        while st.sum < tau {
            frontier.clear();
            for &m in &members {
                frontier.extend(graph.adj[m].iter().copied().filter(|&w| region_of[w] == UNASSIGNED));
            }
            let mean = st.mean();
            let pick = frontier
                .iter()
                .copied()
                .min_by(|&a, &b| (loads[a] - mean).abs().total_cmp(&(loads[b] - mean).abs()).then(a.cmp(&b)));
            let Some(w) = pick else { break };
            region_of[w] = id;
            members.push(w);
            st.add(loads[w]);
        }
        if st.sum >= tau {
            stats.push(st);
        } else {
            for &m in &members {
                region_of[m] = ENCLAVE;
            }
        }
    }

    // Enclaves join the adjacent region with the nearest mean, in passes, until
    // none is left. The graph is connected, so every pass makes progress.
    loop {
        let mut pending = false;
        let mut progressed = false;
        for v in 0..n {
            if region_of[v] != ENCLAVE {
                continue;
            }
            let best = graph.adj[v].iter().map(|&w| region_of[w]).filter(|&r| r < stats.len()).min_by(|&a, &b| {
                (loads[v] - stats[a].mean()).abs().total_cmp(&(loads[v] - stats[b].mean()).abs()).then(a.cmp(&b))
            });
            match best {
                Some(r) => {
                    region_of[v] = r;
                    stats[r].add(loads[v]);
                    progressed = true;
                }
                None => pending = true,
            }
        }
        if !pending {
            break;
        }
        assert!(progressed, "enclaves unreachable from any region in a connected graph");
    }

    local_search(graph, loads, tau, &mut region_of, &mut stats);
    (region_of, stats.len())
}

fn local_search(graph: &ContiguityGraph, loads: &[f64], tau: f64, region_of: &mut [usize], stats: &mut [RegionStats]) {
    let n = loads.len();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for _ in 0..MAX_MOVES {
        candidates.clear();
        for v in 0..n {
            let a = region_of[v];
            let x = loads[v];
            let sa = stats[a];
            if sa.n <= 1 || sa.sum - x < tau {
                continue;
            }
            let mut seen_regions: Vec<usize> = Vec::new();
            for &w in &graph.adj[v] {
                let b = region_of[w];
                if b == a || seen_regions.contains(&b) {
                    continue;
                }
                seen_regions.push(b);
                let sb = stats[b];
                let before = sa.ss() + sb.ss();
                let after =
                    ss_of(sa.n - 1, sa.sum - x, sa.sum_sq - x * x) + ss_of(sb.n + 1, sb.sum + x, sb.sum_sq + x * x);
                let delta = after - before;
                if delta < -IMPROVEMENT_EPS {
                    candidates.push((delta, v, b));
                }
            }
        }
        candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
        let chosen = candidates
            .iter()
            .find(|&&(_, v, _)| connected_without(graph, region_of, region_of[v], v, stats[region_of[v]].n));
        let Some(&(_, v, b)) = chosen else { break };
        let a = region_of[v];
        stats[a].remove(loads[v]);
        stats[b].add(loads[v]);
        region_of[v] = b;
    }
}

/// Relabels regions in order of first appearance over the nodes.
pub fn canonicalize(region_of: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; region_of.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    region_of
        .iter()
        .map(|&r| {
            *map[r].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

pub fn maxp(graph: &ContiguityGraph, loads: &[f64], tau: f64, seed: u64) -> Result<Partition, RegionError> {
    let n = graph.adj.len();
    if loads.len() != n {
        return Err(RegionError::LengthMismatch { nodes: n, loads: loads.len() });
    }
    if n == 0 {
        return Err(RegionError::TooFewStops(0));
    }
    if let Some(i) = loads.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(RegionError::BadLoad { index: i, value: loads[i] });
    }
    let total: f64 = loads.iter().sum();
    if !(tau > 0.0) || total < tau {
        return Err(RegionError::Infeasible { total, tau });
    }
    if !graph.is_connected() {
        return Err(RegionError::Disconnected);
    }

    let runs: Vec<(Vec<usize>, usize, f64)> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let (region_of, p) = construct(graph, loads, tau, &mut rng);
            let w = wgss(&region_of, p, loads);
            (region_of, p, w)
        })
        .collect();
    let (best, p, w) = runs
        .into_iter()
        .reduce(|best, cand| if cand.1 > best.1 || (cand.1 == best.1 && cand.2 < best.2) { cand } else { best })
        .expect("at least one restart");

    let region_of = canonicalize(&best);
    let mut region_sums = vec![0.0; p];
    for (i, &r) in region_of.iter().enumerate() {
        region_sums[r] += loads[i];
    }
    Ok(Partition { region_of, p, tau, region_sums, wgss: w })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> ContiguityGraph {
        ContiguityGraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1)))
    }

    fn complete(n: usize) -> ContiguityGraph {
        ContiguityGraph::from_edges(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    #[test]
    fn tau_equal_total_forces_one_region() {
        let loads = [1.0, 2.0, 3.0, 4.0];
        let p = maxp(&path(4), &loads, 10.0, 7).unwrap();
        assert_eq!(p.p, 1);
        assert_eq!(p.region_of, vec![0; 4]);
    }

    #[test]
    fn singletons_on_complete_graph() {
        let p = maxp(&complete(4), &[3.0, 5.0, 4.0, 6.0], 3.0, 1).unwrap();
        assert_eq!(p.p, 4);
    }

    #[test]
    fn path_of_six_pairs() {
        let p = maxp(&path(6), &[1.0; 6], 2.0, 3).unwrap();
        assert_eq!(p.p, 3);
        assert!(p.region_sums.iter().all(|&s| s >= 2.0));
    }

    #[test]
    fn infeasible_and_disconnected() {
        assert!(matches!(maxp(&path(3), &[1.0; 3], 4.0, 0), Err(RegionError::Infeasible { .. })));
        let g = ContiguityGraph::from_edges(4, [(0, 1), (2, 3)]);
        assert!(matches!(maxp(&g, &[1.0; 4], 1.0, 0), Err(RegionError::Disconnected)));
    }

    #[test]
    fn canonical_labels() {
        assert_eq!(canonicalize(&[5, 5, 2, 7, 2]), vec![0, 0, 1, 2, 1]);
    }
}
