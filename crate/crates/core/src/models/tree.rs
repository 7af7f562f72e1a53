//! CART regression trees with exact greedy splits.
//!
//! Each feature is sorted once into its distinct values; a row then carries
//! the index of its value. Growing one level costs a single pass per feature
//! that accumulates per-node sums by distinct value, followed by a scan of
//! those sums. Every boundary between consecutive distinct values present in
//! a node is a candidate, so the search is exact.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Column-major training data compressed to distinct-value indices.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub rows: usize,
    /// Ascending distinct values of each feature.
    pub values: Vec<Vec<f64>>,
    /// `bins[f][row]` indexes `values[f]`.
    pub bins: Vec<Vec<u32>>,
}

impl BinnedMatrix {
    /// `columns` must hold no NaN.
    pub fn new(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(columns.len());
        let mut bins = Vec::with_capacity(columns.len());
        for col in columns {
            assert_eq!(col.len(), rows, "ragged feature matrix");
            let mut order: Vec<u32> = (0..rows as u32).collect();
            order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let mut uniq: Vec<f64> = Vec::new();
            let mut bin = vec![0u32; rows];
            for &r in &order {
                let v = col[r as usize];
                if uniq.last() != Some(&v) {
                    uniq.push(v);
                }
                bin[r as usize] = (uniq.len() - 1) as u32;
            }
            values.push(uniq);
            bins.push(bin);
        }
        BinnedMatrix { rows, values, bins }
    }

    pub fn features(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        self.predict_row(|f| columns[f][row])
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until no admissible split remains.
    pub max_depth: Option<usize>,
    /// Minimum weighted row count on each side of a split.
    pub min_leaf: u32,
    /// Fraction of features offered to each node; 1.0 offers all.
    pub feature_frac: f64,
    /// Leaf values are multiplied by this factor.
    pub scale: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_leaf: 1, feature_frac: 1.0, scale: 1.0 }
    }
}

/// A fitted tree plus the leaf node each training row fell into.
pub struct Fit {
    pub tree: Tree,
    pub row_leaf: Vec<u32>,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    w: f64,
    s: f64,
}

struct Candidate {
    gain: f64,
    feature: usize,
    bin: u32,
    threshold: f64,
}

const MIN_GAIN: f64 = 1e-12;
const NO_NODE: u32 = u32::MAX;

/// Fits a regression tree to `target` with integer row `weights` (zero
/// excludes a row from fitting; it is still routed so `row_leaf` covers it).
pub fn fit_tree<R: Rng>(x: &BinnedMatrix, target: &[f64], weights: &[u32], params: &TreeParams, rng: &mut R) -> Fit {
    let n = x.rows;
    assert_eq!(target.len(), n);
    assert_eq!(weights.len(), n);
    let n_feat = x.features();
    let per_node_features = ((params.feature_frac * n_feat as f64).ceil() as usize).clamp(1, n_feat.max(1));

    let mut nodes: Vec<Node> = Vec::new();
    // Node id in `nodes` of each row's current frontier node, and the frontier
    // slot used for histogram indexing (NO_NODE once the row sits in a leaf).
    let mut row_node = vec![0u32; n];
    let mut row_slot = vec![0u32; n];

    let mut root = Acc::default();
    for r in 0..n {
        let w = weights[r] as f64;
        root.w += w;
        root.s += w * target[r];
    }
    nodes.push(Node::Leaf { value: leaf_value(root, params.scale) });
    let mut frontier: Vec<(usize, Acc)> = vec![(0, root)];
    let mut depth = 0;
    let mut hist: Vec<Acc> = Vec::new();

    while !frontier.is_empty() && params.max_depth.map_or(true, |d| depth < d) && n_feat > 0 {
        let slots = frontier.len();
        let allowed: Vec<Vec<bool>> = if per_node_features < n_feat {
            frontier
                .iter()
                .map(|_| {
                    let mut mask = vec![false; n_feat];
                    for f in sample(rng, n_feat, per_node_features).into_iter() {
                        mask[f] = true;
                    }
                    mask
                })
                .collect()
        } else {
            vec![vec![true; n_feat]; slots]
        };
        let splittable: Vec<bool> = frontier.iter().map(|(_, a)| a.w >= 2.0 * params.min_leaf.max(1) as f64).collect();
        let mut best: Vec<Option<Candidate>> = (0..slots).map(|_| None).collect();

        for f in 0..n_feat {
            if !(0..slots).any(|s| splittable[s] && allowed[s][f]) {
                continue;
            }
            let nv = x.values[f].len();
            if nv < 2 {
                continue;
            }
            hist.clear();
            hist.resize(slots * nv, Acc::default());
            let bins = &x.bins[f];
            for r in 0..n {
                let slot = row_slot[r];
                if slot == NO_NODE || weights[r] == 0 {
                    continue;
                }
                let w = weights[r] as f64;
                let h = &mut hist[slot as usize * nv + bins[r] as usize];
                h.w += w;
                h.s += w * target[r];
            }
            for s in 0..slots {
                if !splittable[s] || !allowed[s][f] {
                    continue;
                }
                let total = frontier[s].1;
                let parent = total.s * total.s / total.w;
                let h = &hist[s * nv..(s + 1) * nv];
                let mut left = Acc::default();
                let mut last: Option<usize> = None;
                for (b, acc) in h.iter().enumerate() {
                    if acc.w == 0.0 {
                        continue;
                    }
                    if let Some(lb) = last {
                        let rw = total.w - left.w;
                        if left.w >= params.min_leaf as f64 && rw >= params.min_leaf as f64 {
                            let rs = total.s - left.s;
                            let gain = left.s * left.s / left.w + rs * rs / rw - parent;
                            let better = match &best[s] {
                                None => gain > MIN_GAIN,
                                Some(c) => gain > c.gain,
                            };
                            if better {
                                let lo = x.values[f][lb];
                                let hi = x.values[f][b];
                                let mut thr = lo + (hi - lo) / 2.0;
                                if !(thr < hi) || !(thr >= lo) {
                                    thr = lo;
                                }
                                best[s] = Some(Candidate { gain, feature: f, bin: lb as u32, threshold: thr });
                            }
                        }
                    }
                    left.w += acc.w;
                    left.s += acc.s;
                    last = Some(b);
                }
            }
        }

        // Materialize the splits and the next frontier.
        let mut next: Vec<(usize, Acc)> = Vec::new();
        let mut child_slot: Vec<Option<(u32, u32)>> = vec![None; slots];
        let mut child_acc: Vec<(Acc, Acc)> = vec![(Acc::default(), Acc::default()); slots];
        for (s, cand) in best.iter().enumerate() {
            if let Some(c) = cand {
                let l = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[frontier[s].0] =
                    Node::Split { feature: c.feature, threshold: c.threshold, left: l, right: l + 1 };
                child_slot[s] = Some((next.len() as u32, next.len() as u32 + 1));
                next.push((l, Acc::default()));
                next.push((l + 1, Acc::default()));
            }
        }
        for r in 0..n {
            let slot = row_slot[r];
            if slot == NO_NODE {
                continue;
            }
            let s = slot as usize;
            match (&best[s], child_slot[s]) {
                (Some(c), Some((ls, rs))) => {
                    let go_left = x.bins[c.feature][r] <= c.bin;
                    let (ns, nid) = if go_left { (ls, next[ls as usize].0) } else { (rs, next[rs as usize].0) };
                    row_slot[r] = ns;
                    row_node[r] = nid as u32;
                    let w = weights[r] as f64;
                    let acc = if go_left { &mut child_acc[s].0 } else { &mut child_acc[s].1 };
                    acc.w += w;
                    acc.s += w * target[r];
                }
                _ => row_slot[r] = NO_NODE,
            }
        }
        for s in 0..slots {
            if let Some((ls, rs)) = child_slot[s] {
                next[ls as usize].1 = child_acc[s].0;
                next[rs as usize].1 = child_acc[s].1;
            }
        }
        for &(id, acc) in &next {
            nodes[id] = Node::Leaf { value: leaf_value(acc, params.scale) };
        }
        frontier = next;
        depth += 1;
    }

    Fit { tree: Tree { nodes }, row_leaf: row_node }
}

fn leaf_value(acc: Acc, scale: f64) -> f64 {
    if acc.w > 0.0 {
        acc.s / acc.w * scale
    } else {
        0.0
    }
}
