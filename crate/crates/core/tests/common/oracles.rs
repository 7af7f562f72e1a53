//! Brute-force reference implementations. Each one follows the textbook
//! definition directly and shares no code with the library.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;

pub type Q = Ratio<i128>;

pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// All-pairs hop distances by Floyd–Warshall; `None` is unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = Some(0);
    }
    for &(u, v) in edges {
        d[u][v] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].map_or(true, |c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Every shortest `s → t` path, found by depth-first search along the
/// distance layers.
pub fn shortest_paths(adj: &[Vec<usize>], dist: &[Vec<Option<usize>>], s: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let Some(target) = dist[s][t] else { return out };
    fn go(
        adj: &[Vec<usize>],
        dist: &[Vec<Option<usize>>],
        path: &mut Vec<usize>,
        t: usize,
        target: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        let v = *path.last().unwrap();
        if v == t {
            if path.len() - 1 == target {
                out.push(path.clone());
            }
            return;
        }
        let here = path.len() - 1;
        for &w in &adj[v] {
            // Stay on a shortest path: w must be one hop further and still
            // exactly the right distance from t.
            if dist[path[0]][w] == Some(here + 1) && dist[w][t].map_or(false, |r| here + 1 + r == target) {
                path.push(w);
                go(adj, dist, path, t, target, out);
                path.pop();
            }
        }
    }
    go(adj, dist, &mut vec![s], t, target, &mut out);
    out
}

/// Exact node betweenness (inner nodes of each ordered pair's shortest paths)
/// and edge betweenness (every edge on those paths).
pub fn betweenness_oracle(n: usize, edges: &[(usize, usize)]) -> (Vec<Q>, BTreeMap<(usize, usize), Q>) {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u != v && !adj[u].contains(&v) {
            adj[u].push(v);
        }
    }
    let dist = floyd_warshall(n, edges);
    let mut node = vec![Q::from_integer(0); n];
    let mut edge: BTreeMap<(usize, usize), Q> = BTreeMap::new();
    for (u, vs) in adj.iter().enumerate() {
        for &v in vs {
            edge.insert((u, v), Q::from_integer(0));
        }
    }
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let paths = shortest_paths(&adj, &dist, s, t);
            if paths.is_empty() {
                continue;
            }
            let share = Q::new(1, paths.len() as i128);
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    node[v] += share;
                }
                for w in p.windows(2) {
                    *edge.get_mut(&(w[0], w[1])).unwrap() += share;
                }
            }
        }
    }
    (node, edge)
}

pub fn closeness_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Q> {
    let dist = floyd_warshall(n, edges);
    (0..n)
        .map(|v| {
            let ds: Vec<usize> = (0..n).filter(|&u| u != v).filter_map(|u| dist[v][u]).collect();
            let reach = ds.len() as i128;
            let total: i128 = ds.iter().map(|&d| d as i128).sum();
            if reach == 0 {
                Q::from_integer(0)
            } else {
                Q::new(reach * reach, total * (n as i128 - 1))
            }
        })
        .collect()
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

pub fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    const R: f64 = 6_371_000.0;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * h.sqrt().asin()
}

/// The O(n³) definition: `(u, v)` is an edge iff no third point lies
/// strictly inside the circle with diameter `uv`.
pub fn gabriel_oracle(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let n = points.len();
    let d = |i: usize, j: usize| haversine(points[i], points[j]);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let duv = d(u, v);
            if (0..n).filter(|&w| w != u && w != v).all(|w| d(u, w).powi(2) + d(w, v).powi(2) >= duv * duv) {
                edges.push((u, v));
            }
        }
    }
    edges
}

pub fn connected_subset(adj: &[Vec<usize>], members: &[usize]) -> bool {
    let Some(&start) = members.first() else { return false };
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if members.contains(&w) && !seen.contains(&w) {
                seen.push(w);
                stack.push(w);
            }
        }
    }
    seen.len() == members.len()
}

/// Largest number of regions over all set partitions of `0..n` whose blocks
/// are connected and reach `tau`. Partitions are enumerated as restricted
/// growth strings. Returns 0 when no feasible partition exists.
pub fn exhaustive_max_p(adj: &[Vec<usize>], loads: &[f64], tau: f64) -> usize {
    let n = loads.len();
    let mut labels = vec![0usize; n];
    let mut best = 0;
    fn rec(
        i: usize,
        blocks: usize,
        labels: &mut Vec<usize>,
        adj: &[Vec<usize>],
        loads: &[f64],
        tau: f64,
        best: &mut usize,
    ) {
        let n = loads.len();
        if i == n {
            if blocks <= *best {
                return;
            }
            let ok = (0..blocks).all(|b| {
                let members: Vec<usize> = (0..n).filter(|&v| labels[v] == b).collect();
                members.iter().map(|&v| loads[v]).sum::<f64>() >= tau && connected_subset(adj, &members)
            });
            if ok {
                *best = blocks;
            }
            return;
        }
        for b in 0..=blocks {
            labels[i] = b;
            rec(i + 1, blocks.max(b + 1), labels, adj, loads, tau, best);
        }
    }
    if n > 0 {
        rec(1, 1, &mut labels, adj, loads, tau, &mut best);
    }
    best
}

/// Textbook recursive CART on squared error: at every node try each feature
/// and each midpoint between consecutive distinct values, keep the largest
/// SSE reduction (earliest feature, then lowest threshold, on ties), and
/// stop at `max_depth`, when a side would hold fewer than `min_leaf` rows, or
/// when no split reduces the error.
pub enum Cart {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Cart>, right: Box<Cart> },
}

impl Cart {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        rows: &[usize],
        depth: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
    ) -> Cart {
        let count = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        let leaf = Cart::Leaf(sum / count);
        if max_depth.map_or(false, |d| depth >= d) || rows.len() < 2 * min_leaf {
            return leaf;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, col) in x.iter().enumerate() {
            let mut values: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let mut threshold = w[0] + (w[1] - w[0]) / 2.0;
                if threshold >= w[1] {
                    threshold = w[0];
                }
                let (mut lc, mut ls) = (0.0, 0.0);
                for &r in rows {
                    if col[r] <= threshold {
                        lc += 1.0;
                        ls += y[r];
                    }
                }
                let (rc, rs) = (count - lc, sum - ls);
                if lc < min_leaf as f64 || rc < min_leaf as f64 {
                    continue;
                }
                let gain = ls * ls / lc + rs * rs / rc - sum * sum / count;
                if gain > 1e-12 && best.map_or(true, |b| gain > b.0) {
                    best = Some((gain, f, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { return leaf };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[feature][r] <= threshold);
        Cart::Split {
            feature,
            threshold,
            left: Box::new(Cart::fit(x, y, &l, depth + 1, max_depth, min_leaf)),
            right: Box::new(Cart::fit(x, y, &r, depth + 1, max_depth, min_leaf)),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Cart::Leaf(v) => *v,
            Cart::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

fn doubled_mid_ranks(values: &[f64]) -> Vec<i64> {
    // rank = #smaller + (#equal + 1)/2, doubled to stay integral.
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&w| w < v).count() as i64;
            let equal = values.iter().filter(|&&w| w == v).count() as i64;
            2 * less + equal + 1
        })
        .collect()
}

/// Two-sided exact Wilcoxon signed-rank p-value by enumerating all `2^n`
/// sign assignments of the nonzero differences.
pub fn wilcoxon_enumeration(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    let ranks = doubled_mid_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let total: i64 = ranks.iter().sum();
    let observed: i64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let stat = observed.min(total - observed);
    let n = d.len();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let s: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= stat {
            extreme += 1;
        }
    }
    Some((stat as f64 / 2.0, extreme as f64 / (1u64 << n) as f64))
}

/// Kendall's τ-b by counting every pair.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = x[i].total_cmp(&x[j]) as i8;
            let b = y[i].total_cmp(&y[j]) as i8;
            tx += (a == 0) as i64;
            ty += (b == 0) as i64;
            match a * b {
                1 => c += 1,
                -1 => d += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * n.saturating_sub(1) / 2) as i64;
    let denom = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    (n >= 2 && denom > 0.0).then(|| (c - d) as f64 / denom)
}

/// Quantile by order statistics: `x_(⌊h⌋) + (h − ⌊h⌋)(x_(⌊h⌋+1) − x_(⌊h⌋))`
/// with `h = (n − 1)p` on the 0-based sorted sample.
pub fn quantile_oracle(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    if i + 1 >= s.len() {
        return s[i];
    }
    s[i] + (h - i as f64) * (s[i + 1] - s[i])
}
