//! Centralities on small directed graphs, hop-count shortest paths.

use std::collections::VecDeque;

/// Directed graph over nodes `0..n` with sorted, deduplicated adjacency and
/// no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl DiGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) out of range for {n} nodes");
            if u != v {
                out[u].push(v);
                inc[v].push(u);
            }
        }
        for list in out.iter_mut().chain(inc.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        DiGraph { out, inc }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out[v].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.inc[v].len()
    }

    /// Edges in `(u, v)` lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// Sorted neighbor lists of the undirected projection.
    pub fn undirected(&self) -> Vec<Vec<usize>> {
        (0..self.node_count())
            .map(|v| {
                let mut nb: Vec<usize> = self.out[v].iter().chain(&self.inc[v]).copied().collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }

    fn edge_slot(&self, u: usize, v: usize) -> usize {
        let base: usize = self.out[..u].iter().map(Vec::len).sum();
        base + self.out[u].binary_search(&v).expect("edge exists")
    }
}

/// Hop distances from `s`; `None` marks unreachable nodes.
pub fn bfs_distances(g: &DiGraph, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].unwrap();
        for &w in g.successors(v) {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Node and edge betweenness, unnormalized. Edge values follow the order of
/// [`DiGraph::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Betweenness {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

/// Brandes accumulation over every source. For node betweenness each ordered
/// pair `(s, t)` adds the fraction of shortest `s → t` paths through an inner
/// node; for edges the pair's endpoints count, so the edge into `t` collects
/// the pair itself.
pub fn betweenness(g: &DiGraph) -> Betweenness {
    let n = g.node_count();
    let mut node = vec![0.0; n];
    let mut edge = vec![0.0; g.edge_count()];
    let slot_base: Vec<usize> = {
        let mut acc = 0;
        (0..n)
            .map(|u| {
                let b = acc;
                acc += g.out_degree(u);
                b
            })
            .collect()
    };

    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        pred.iter_mut().for_each(Vec::clear);
        order.clear();

        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.successors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    pred[w].push(v);
                }
            }
        }

        for &w in order.iter().rev() {
            for &v in &pred[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                let k = g.out[v].binary_search(&w).expect("predecessor edge");
                edge[slot_base[v] + k] += c;
                delta[v] += c;
            }
            if w != s {
                node[w] += delta[w];
            }
        }
    }
    Betweenness { node, edge }
}

/// Reachability-corrected closeness: `(|R|/Σd) · (|R|/(n−1))` over the set
/// `R` reachable from each node, 0 when nothing is reachable.
pub fn closeness(g: &DiGraph) -> Vec<f64> {
    let n = g.node_count();
    (0..n)
        .map(|v| {
            let (reach, total) = bfs_distances(g, v)
                .iter()
                .enumerate()
                .filter_map(|(u, d)| d.filter(|_| u != v))
                .fold((0usize, 0usize), |(r, t), d| (r + 1, t + d));
            if reach == 0 || n < 2 {
                0.0
            } else {
                (reach as f64 / total as f64) * (reach as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenvector {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const EIGEN_TOL: f64 = 1e-8;
pub const EIGEN_MAX_ITER: usize = 1000;

/// Eigenvector centrality of the undirected projection, scaled so the largest
/// entry is 1. Iterates with `A + I`, which has the same dominant eigenvector
/// as `A` but does not oscillate on bipartite graphs such as stars and paths.
pub fn eigenvector(g: &DiGraph) -> Eigenvector {
    let n = g.node_count();
    if n == 0 {
        return Eigenvector { values: Vec::new(), converged: true, iterations: 0 };
    }
    let adj = g.undirected();
    let mut x = vec![1.0; n];
    let mut next = vec![0.0; n];
    for it in 1..=EIGEN_MAX_ITER {
        for v in 0..n {
            next[v] = x[v] + adj[v].iter().map(|&u| x[u]).sum::<f64>();
        }
        let scale = next.iter().cloned().fold(0.0, f64::max);
        for v in &mut next {
            *v /= scale;
        }
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change < EIGEN_TOL {
            return Eigenvector { values: x, converged: true, iterations: it };
        }
    }
    Eigenvector { values: x, converged: false, iterations: EIGEN_MAX_ITER }
}

/// `|E| / (n(n−1))`; 0 for fewer than two nodes.
pub fn density(g: &DiGraph) -> f64 {
    let n = g.node_count();
    if n < 2 {
        0.0
    } else {
        g.edge_count() as f64 / (n * (n - 1)) as f64
    }
}

/// Local clustering per node on the undirected projection; nodes of degree
/// below 2 score 0.
pub fn clustering(g: &DiGraph) -> Vec<f64> {
    let adj = g.undirected();
    adj.iter()
        .map(|nb| {
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if adj[a].binary_search(&b).is_ok() {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

pub fn average_clustering(g: &DiGraph) -> f64 {
    let c = clustering(g);
    if c.is_empty() {
        0.0
    } else {
        c.iter().sum::<f64>() / c.len() as f64
    }
}

impl DiGraph {
    /// Index of edge `(u, v)` in [`DiGraph::edges`] order.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.out.get(u)?.binary_search(&v).ok().map(|_| self.edge_slot(u, v))
    }
}
