//! Density clustering over mutual reachability distances with
//! excess-of-mass cluster selection. Neighbour search and the spanning tree
//! are exact and quadratic in the number of rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{AnalyticsError, Distances, Matrix};
use crate::hexgrid::format_f64;

/// Distance from each point to its `min_samples`-th nearest neighbour,
/// counting the point itself as the first.
pub fn core_distances(x: &Matrix, min_samples: usize) -> Result<Vec<f64>, AnalyticsError> {
    check_min_samples(x.nrows(), min_samples)?;
    Ok(core_from(&Distances::new(x), min_samples))
}

fn check_min_samples(n: usize, min_samples: usize) -> Result<(), AnalyticsError> {
    if min_samples == 0 || min_samples > n {
        return Err(AnalyticsError::Parameter(format!(
            "min_samples must be in 1..={n}, got {min_samples}"
        )));
    }
    Ok(())
}

pub(crate) fn core_from(dist: &Distances<'_>, min_samples: usize) -> Vec<f64> {
    let n = dist.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| dist.get(i, j)).collect();
            let (_, kth, _) = row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Spanning-tree edge; `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn edge_key(w: f64, u: usize, v: usize) -> (f64, usize, usize) {
    (w, u.min(v), u.max(v))
}

fn key_less(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
}

/// Minimum spanning tree of the complete mutual reachability graph,
/// `max(core(a), core(b), dist(a, b))`. Edges compare by (weight, smaller
/// index, larger index), which makes the tree unique.
pub fn mutual_reachability_mst(x: &Matrix, min_samples: usize) -> Result<Vec<MstEdge>, AnalyticsError> {
    x.require_rows(2)?;
    check_min_samples(x.nrows(), min_samples)?;
    let dist = Distances::new(x);
    let core = core_from(&dist, min_samples);
    Ok(mst_from(&dist, &core))
}

pub(crate) fn mst_from(dist: &Distances<'_>, core: &[f64]) -> Vec<MstEdge> {
    let n = dist.len();
    let mut in_tree = vec![false; n];
    let mut best: Vec<(f64, usize, usize)> = vec![(f64::INFINITY, usize::MAX, usize::MAX); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = dist.get(current, v).max(core[current]).max(core[v]);
            let cand = edge_key(w, current, v);
            if key_less(cand, best[v]) {
                best[v] = cand;
            }
            if pick.is_none_or(|p| key_less(best[v], best[p])) {
                pick = Some(v);
            }
        }
        let v = pick.expect("vertices remain");
        let (weight, a, b) = best[v];
        edges.push(MstEdge { a, b, weight });
        in_tree[v] = true;
        current = v;
    }
    edges
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage dendrogram; node `n + i` is the i-th merge.
pub(crate) fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<Merge> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size: Vec<usize> = vec![1; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        while parent[x] != root {
            let next = parent[x];
            parent[x] = root;
            x = next;
        }
        root
    }
    let mut merges = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: e.weight,
            size: size[node],
        });
    }
    merges
}

/// Condensed-tree edge. `child` below the row count is a point leaving
/// `parent` at `lambda`; otherwise it is a cluster born at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

fn node_size(n: usize, merges: &[Merge], node: usize) -> usize {
    if node < n { 1 } else { merges[node - n].size }
}

fn points_under(n: usize, merges: &[Merge], node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = merges[x - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    out.sort_unstable();
}

pub(crate) fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let mut tree = Vec::new();
    if n < 2 {
        return tree;
    }
    let root = 2 * n - 2;
    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut queue = vec![root];
    while !queue.is_empty() {
        let mut next = Vec::new();
        for node in queue {
            if node < n {
                continue;
            }
            let m = merges[node - n];
            let lambda = if m.distance > 0.0 { 1.0 / m.distance } else { f64::INFINITY };
            let (ls, rs) = (node_size(n, merges, m.left), node_size(n, merges, m.right));
            let parent = relabel[node];
            let fall_out = |child: usize, tree: &mut Vec<CondensedEdge>| {
                let mut pts = Vec::new();
                points_under(n, merges, child, &mut pts);
                for p in pts {
                    tree.push(CondensedEdge { parent, child: p, lambda, size: 1 });
                }
            };
            // a split at zero distance separates nothing; its points stay
            // in the parent until infinite density
            if !lambda.is_finite() {
                fall_out(m.left, &mut tree);
                fall_out(m.right, &mut tree);
                continue;
            }
            match (ls >= min_cluster_size, rs >= min_cluster_size) {
                (true, true) => {
                    for (child, size) in [(m.left, ls), (m.right, rs)] {
                        relabel[child] = next_label;
                        tree.push(CondensedEdge { parent, child: next_label, lambda, size });
                        next_label += 1;
                        next.push(child);
                    }
                }
                (false, false) => {
                    fall_out(m.left, &mut tree);
                    fall_out(m.right, &mut tree);
                }
                (true, false) => {
                    relabel[m.left] = parent;
                    fall_out(m.right, &mut tree);
                    next.push(m.left);
                }
                (false, true) => {
                    relabel[m.right] = parent;
                    fall_out(m.left, &mut tree);
                    next.push(m.right);
                }
            }
        }
        queue = next;
    }
    tree
}

/// Fitted clustering. Labels run 0..K−1 by decreasing cluster size (ties by
/// tree order); −1 is noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub labels: Vec<i64>,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// Stability of the selected cluster behind each label.
    pub stabilities: Vec<f64>,
    pub tree: Vec<CondensedEdge>,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.stabilities.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| **l < 0).count()
    }

    /// Condensed tree as CSV `parent,child,lambda,size`.
    pub fn tree_csv(&self) -> String {
        let mut out = String::from("parent,child,lambda,size\n");
        for e in &self.tree {
            let _ = writeln!(out, "{},{},{},{}", e.parent, e.child, format_f64(e.lambda), e.size);
        }
        out
    }
}

fn lambda_gap(lambda: f64, birth: f64) -> f64 {
    if lambda == birth { 0.0 } else { lambda - birth }
}

pub(crate) fn extract(n: usize, tree: Vec<CondensedEdge>, min_cluster_size: usize, min_samples: usize) -> ClusterModel {
    let root = n;
    let mut birth: BTreeMap<usize, f64> = BTreeMap::from([(root, 0.0)]);
    let mut cluster_parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut point_parent = vec![root; n];
    let mut point_lambda = vec![0.0; n];
    for e in &tree {
        if e.child >= n {
            birth.insert(e.child, e.lambda);
            cluster_parent.insert(e.child, e.parent);
            children.entry(e.parent).or_default().push(e.child);
        } else {
            point_parent[e.child] = e.parent;
            point_lambda[e.child] = e.lambda;
        }
    }
    let mut stability: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for e in &tree {
        *stability.get_mut(&e.parent).expect("parent is a cluster") +=
            lambda_gap(e.lambda, birth[&e.parent]) * e.size as f64;
    }

    let mut selected: BTreeMap<usize, bool> = BTreeMap::new();
    let mut propagated = stability.clone();
    let root_has_children = children.contains_key(&root);
    for &c in stability.keys().rev() {
        if c == root && root_has_children {
            selected.insert(c, false);
            continue;
        }
        match children.get(&c) {
            None => {
                selected.insert(c, true);
            }
            Some(kids) => {
                let sum: f64 = kids.iter().map(|k| propagated[k]).sum();
                if stability[&c] > sum {
                    selected.insert(c, true);
                    let mut stack = kids.clone();
                    while let Some(k) = stack.pop() {
                        selected.insert(k, false);
                        if let Some(g) = children.get(&k) {
                            stack.extend(g);
                        }
                    }
                } else {
                    selected.insert(c, false);
                    propagated.insert(c, sum);
                }
            }
        }
    }

    let root_lambda_max = tree
        .iter()
        .filter(|e| e.parent == root)
        .map(|e| e.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut raw = vec![None; n];
    for p in 0..n {
        let mut c = point_parent[p];
        loop {
            if selected[&c] {
                if c != root || point_lambda[p] >= root_lambda_max {
                    raw[p] = Some(c);
                }
                break;
            }
            match cluster_parent.get(&c) {
                Some(&up) => c = up,
                None => break,
            }
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for c in raw.iter().flatten() {
        *counts.entry(*c).or_default() += 1;
    }
    counts.retain(|_, size| *size >= min_cluster_size);
    let mut order: Vec<(usize, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let ids: BTreeMap<usize, i64> = order.iter().enumerate().map(|(i, (c, _))| (*c, i as i64)).collect();
    ClusterModel {
        labels: raw.iter().map(|c| c.and_then(|c| ids.get(&c).copied()).unwrap_or(-1)).collect(),
        min_cluster_size,
        min_samples,
        stabilities: order.iter().map(|(c, _)| stability[c]).collect(),
        tree,
    }
}

pub(crate) fn fit_from_linkage(n: usize, merges: &[Merge], min_cluster_size: usize, min_samples: usize) -> ClusterModel {
    extract(n, condense(n, merges, min_cluster_size), min_cluster_size, min_samples)
}

pub fn hdbscan_fit(x: &Matrix, min_cluster_size: usize, min_samples: usize) -> Result<ClusterModel, AnalyticsError> {
    let n = x.nrows();
    x.require_rows(2)?;
    if min_cluster_size < 2 || min_cluster_size > n {
        return Err(AnalyticsError::Parameter(format!(
            "min_cluster_size must be in 2..={n}, got {min_cluster_size}"
        )));
    }
    let mst = mutual_reachability_mst(x, min_samples)?;
    Ok(fit_from_linkage(n, &single_linkage(n, &mst), min_cluster_size, min_samples))
}
