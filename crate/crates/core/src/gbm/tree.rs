//! Regression trees grown on gradient statistics with exact greedy splits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: u32,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with `x < threshold` go left.
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Adds each split's gain to its feature's total.
    pub fn accumulate_gain(&self, totals: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                totals[*feature] += gain;
            }
        }
    }
}

/// Row order of every column, ascending by value then row index. Built once
/// per training set and shared by all trees.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.n_cols())
            .into_par_iter()
            .map(|c| {
                let mut rows: Vec<u32> = (0..x.n_rows() as u32).collect();
                rows.sort_by(|&a, &b| x.get(a as usize, c).total_cmp(&x.get(b as usize, c)));
                rows
            })
            .collect();
        SortedColumns { order }
    }
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        -g / denom
    } else {
        0.0
    }
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

/// Threshold strictly between two adjacent distinct values.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

/// Best split of every open node at one depth. `node_of[r]` is the open
/// node holding row `r` (None for rows outside the sample); `totals` holds
/// each node's gradient and hessian sums.
fn scan_level(
    x: &Matrix,
    sorted: &SortedColumns,
    features: &[usize],
    node_of: &[Option<u32>],
    totals: &[(f64, f64)],
    g: &[f64],
    h: &[f64],
    params: &TreeParams,
) -> Vec<Option<SplitCandidate>> {
    let n_nodes = totals.len();
    let per_feature: Vec<Vec<Option<SplitCandidate>>> = features
        .par_iter()
        .map(|&f| {
            let mut best: Vec<Option<SplitCandidate>> = vec![None; n_nodes];
            let mut gl = vec![0.0; n_nodes];
            let mut hl = vec![0.0; n_nodes];
            let mut last: Vec<Option<f64>> = vec![None; n_nodes];
            for &r in &sorted.order[f] {
                let r = r as usize;
                let Some(k) = node_of[r] else { continue };
                let k = k as usize;
                let v = x.get(r, f);
                if let Some(prev) = last[k] {
                    if v > prev {
                        let (gt, ht) = totals[k];
                        let (gr, hr) = (gt - gl[k], ht - hl[k]);
                        if hl[k] >= params.min_child_weight && hr >= params.min_child_weight {
                            let gain = 0.5
                                * (score(gl[k], hl[k], params.lambda)
                                    + score(gr, hr, params.lambda)
                                    - score(gt, ht, params.lambda))
                                - params.gamma;
                            if gain > best[k].map_or(0.0, |b| b.gain) {
                                best[k] = Some(SplitCandidate {
                                    feature: f,
                                    threshold: midpoint(prev, v),
                                    gain,
                                });
                            }
                        }
                    }
                }
                gl[k] += g[r];
                hl[k] += h[r];
                last[k] = Some(v);
            }
            best
        })
        .collect();

    // features arrive in ascending order; strict comparison keeps the first
    let mut out: Vec<Option<SplitCandidate>> = vec![None; n_nodes];
    for cand in per_feature {
        for (slot, c) in out.iter_mut().zip(cand) {
            if let Some(c) = c {
                if slot.is_none_or(|s| c.gain > s.gain) {
                    *slot = Some(c);
                }
            }
        }
    }
    out
}

fn node_totals(node_of: &[Option<u32>], n_nodes: usize, g: &[f64], h: &[f64]) -> Vec<(f64, f64)> {
    let mut totals = vec![(0.0, 0.0); n_nodes];
    for (r, k) in node_of.iter().enumerate() {
        if let Some(k) = k {
            let t = &mut totals[*k as usize];
            t.0 += g[r];
            t.1 += h[r];
        }
    }
    totals
}

/// Best split of the node made of `rows` (distinct) over `features`, or
/// None when no split has positive gain. Ties go to the lowest feature
/// index, then the lowest threshold.
pub fn best_split(
    x: &Matrix,
    rows: &[usize],
    features: &[usize],
    g: &[f64],
    h: &[f64],
    params: &TreeParams,
) -> Option<SplitCandidate> {
    let sorted = SortedColumns::new(x);
    let mut node_of = vec![None; x.n_rows()];
    for &r in rows {
        node_of[r] = Some(0);
    }
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    let totals = node_totals(&node_of, 1, g, h);
    scan_level(x, &sorted, &features, &node_of, &totals, g, h, params)[0]
}

/// Grows one tree level by level over `features` (ascending). Rows not
/// `included` take no part; `g` and `h` may carry per-row multiplicities.
pub fn build_tree(
    x: &Matrix,
    sorted: &SortedColumns,
    features: &[usize],
    included: &[bool],
    g: &[f64],
    h: &[f64],
    params: &TreeParams,
) -> Tree {
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // open[k] is the arena index of open node k
    let mut open = vec![0usize];
    let mut node_of: Vec<Option<u32>> =
        included.iter().map(|&inc| if inc { Some(0) } else { None }).collect();
    let mut depth = 0;
    loop {
        let totals = node_totals(&node_of, open.len(), g, h);
        let splits = if depth < params.max_depth {
            scan_level(x, sorted, features, &node_of, &totals, g, h, params)
        } else {
            vec![None; open.len()]
        };
        let mut next_open = Vec::new();
        // child slots of each split node: (left, right) in next_open
        let mut child_slot: Vec<Option<(u32, u32, usize, f64)>> = vec![None; open.len()];
        for (k, split) in splits.iter().enumerate() {
            let (gt, ht) = totals[k];
            match split {
                None => nodes[open[k]] = Node::Leaf { value: leaf_weight(gt, ht, params.lambda) },
                Some(s) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[open[k]] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        gain: s.gain,
                        left,
                        right: left + 1,
                    };
                    let ls = next_open.len() as u32;
                    next_open.push(left);
                    next_open.push(left + 1);
                    child_slot[k] = Some((ls, ls + 1, s.feature, s.threshold));
                }
            }
        }
        if next_open.is_empty() {
            return Tree { nodes };
        }
        for (r, slot) in node_of.iter_mut().enumerate() {
            if let Some(k) = *slot {
                *slot = child_slot[k as usize].map(|(l, rr, f, thr)| {
                    if x.get(r, f) < thr {
                        l
                    } else {
                        rr
                    }
                });
            }
        }
        open = next_open;
        depth += 1;
    }
}
