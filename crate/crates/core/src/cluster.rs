//! Agglomerative hierarchical clustering over low-dimensional coordinates,
//! silhouette widths, and silhouette-based selection of the cluster count.
//!
//! Node numbering follows the usual stepwise-dendrogram convention: leaves
//! are `0..n`, and merge `t` creates node `n + t`.

use std::collections::BTreeMap;
use std::fmt::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccur::LabeledPoints;
use crate::svg;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("coordinates contain non-finite values")]
    NonFinite,
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("assignment has {got} entries for {expected} points")]
    AssignmentLength { expected: usize, got: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

fn check_coords(coords: &DMatrix<f64>, needed: usize) -> Result<(), ClusterError> {
    if coords.nrows() < needed {
        return Err(ClusterError::TooFewPoints {
            needed,
            got: coords.nrows(),
        });
    }
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    Ok(())
}

fn euclidean(coords: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (coords.row(i) - coords.row(j)).norm()
}

/// Lance–Williams agglomeration on Euclidean distances.
///
/// Clusters live in slots; merging slots `i < j` keeps the result in `i`.
/// Among equal distances the lexicographically smallest `(i, j)` wins.
pub fn agglomerate(input: &LabeledPoints, linkage: Linkage) -> Result<ClusterTree, ClusterError> {
    let coords = &input.points;
    check_coords(coords, 2)?;
    let n = coords.nrows();
    let mut d = DMatrix::from_fn(n, n, |i, j| euclidean(coords, i, j));
    let mut active = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for t in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && best.is_none_or(|(_, _, h)| d[(i, j)] < h) {
                    best = Some((i, j, d[(i, j)]));
                }
            }
        }
        let (i, j, h) = best.expect("at least two active clusters");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let updated = match linkage {
                Linkage::Single => d[(i, k)].min(d[(j, k)]),
                Linkage::Complete => d[(i, k)].max(d[(j, k)]),
                Linkage::Average => (ni * d[(i, k)] + nj * d[(j, k)]) / (ni + nj),
            };
            d[(i, k)] = updated;
            d[(k, i)] = updated;
        }
        merges.push(Merge {
            left: node[i],
            right: node[j],
            height: h,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = n + t;
    }
    Ok(ClusterTree {
        leaves: input.names.clone(),
        merges,
        linkage,
    })
}

impl ClusterTree {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaves under every node id (leaves and internal nodes).
    fn members(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves();
        let mut m: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for mg in &self.merges {
            let mut v = m[mg.left].clone();
            v.extend_from_slice(&m[mg.right]);
            m.push(v);
        }
        m
    }

    /// Leaves in drawing order: depth-first, left child first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.n_leaves();
        if self.merges.is_empty() {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![n + self.merges.len() - 1];
        while let Some(id) = stack.pop() {
            if id < n {
                out.push(id);
            } else {
                let mg = &self.merges[id - n];
                stack.push(mg.right);
                stack.push(mg.left);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Graphviz digraph from the root down; leaves are coloured by
    /// `assignment` when given.
    pub fn to_dot(&self, assignment: Option<&[usize]>) -> String {
        let n = self.n_leaves();
        let mut out = String::from("digraph dendrogram {\n  rankdir=TB;\n  node [fontname=\"sans-serif\"];\n");
        for (i, name) in self.leaves.iter().enumerate() {
            let color = assignment.map(|a| svg::color(a[i])).unwrap_or("black");
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\", shape=box, color=\"{color}\"];",
                name.replace('"', "\\\"")
            );
        }
        for (t, mg) in self.merges.iter().enumerate() {
            let id = n + t;
            let _ = writeln!(out, "  n{id} [label=\"{:.4}\", shape=point];", mg.height);
            let _ = writeln!(out, "  n{id} -> n{};", mg.left);
            let _ = writeln!(out, "  n{id} -> n{};", mg.right);
        }
        out.push_str("}\n");
        out
    }

    /// Indented plain-text rendering, root first.
    pub fn to_text(&self) -> String {
        let n = self.n_leaves();
        let mut out = String::new();
        if self.merges.is_empty() {
            for l in &self.leaves {
                let _ = writeln!(out, "{l}");
            }
            return out;
        }
        let mut stack = vec![(n + self.merges.len() - 1, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let indent = "  ".repeat(depth);
            if id < n {
                let _ = writeln!(out, "{indent}{}", self.leaves[id]);
            } else {
                let mg = &self.merges[id - n];
                let _ = writeln!(out, "{indent}+ height={:.6} size={}", mg.height, mg.size);
                stack.push((mg.right, depth + 1));
                stack.push((mg.left, depth + 1));
            }
        }
        out
    }

    /// Dendrogram drawing; a link is coloured by its cluster when every leaf
    /// beneath it shares one cluster in `assignment`.
    pub fn to_svg(&self, title: &str, assignment: Option<&[usize]>) -> String {
        let n = self.n_leaves();
        let (w, h, pad, label_space) = (40.0 + 48.0 * n as f64, 460.0, 40.0, 120.0);
        let order = self.leaf_order();
        let mut x = vec![0.0; n + self.merges.len()];
        let mut y = vec![0.0; n + self.merges.len()];
        for (pos, &leaf) in order.iter().enumerate() {
            x[leaf] = pad + (pos as f64 + 0.5) * (w - 2.0 * pad) / n as f64;
        }
        let top = self.merges.last().map(|m| m.height).unwrap_or(0.0);
        let scale = if top > 0.0 { (h - pad - label_space - 30.0) / top } else { 0.0 };
        let base = h - label_space;
        for i in 0..n {
            y[i] = base;
        }
        let members = self.members();
        let group_of = |id: usize| -> Option<usize> {
            let a = assignment?;
            let first = a[members[id][0]];
            members[id].iter().all(|&l| a[l] == first).then_some(first)
        };

        let mut out = String::new();
        svg::open(&mut out, w, h, title);
        for (t, mg) in self.merges.iter().enumerate() {
            let id = n + t;
            x[id] = 0.5 * (x[mg.left] + x[mg.right]);
            y[id] = base - mg.height * scale;
            let stroke = group_of(id).map(svg::color).unwrap_or("black");
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}"/>"#,
                x[mg.left], y[mg.left], x[mg.left], y[id], x[mg.right], y[id], x[mg.right], y[mg.right]
            );
        }
        for &leaf in &order {
            let fill = group_of(leaf).map(svg::color).unwrap_or("black");
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" fill="{fill}" transform="rotate(60 {:.2} {:.2})">{}</text>"#,
                x[leaf],
                base + 12.0,
                x[leaf],
                base + 12.0,
                svg::escape(&self.leaves[leaf])
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Undoes the last `k - 1` merges. Cluster ids are numbered by first
/// appearance in leaf order.
pub fn cut(tree: &ClusterTree, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = tree.n_leaves();
    if k < 1 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    // representative leaf per node
    let mut rep: Vec<usize> = (0..n).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for mg in tree.merges.iter().take(n - k) {
        let a = find(&mut parent, rep[mg.left]);
        let b = find(&mut parent, rep[mg.right]);
        parent[b] = a;
        rep.push(a);
    }
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = ids.len();
        out.push(*ids.entry(root).or_insert(next));
    }
    Ok(out)
}

/// Per-point silhouette widths and their mean. Points in singleton clusters
/// score 0.
pub fn silhouette(coords: &DMatrix<f64>, assignment: &[usize]) -> Result<(Vec<f64>, f64), ClusterError> {
    let n = coords.nrows();
    if assignment.len() != n {
        return Err(ClusterError::AssignmentLength {
            expected: n,
            got: assignment.len(),
        });
    }
    let k = assignment.iter().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let ci = assignment[i];
        if sizes[ci] == 1 {
            s.push(0.0);
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += euclidean(coords, i, j);
            }
        }
        let a = sums[ci] / (sizes[ci] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != ci)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        s.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    let mean = s.iter().sum::<f64>() / n as f64;
    Ok((s, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k_best: usize,
    pub mean_silhouette_by_k: BTreeMap<usize, f64>,
}

/// Evaluates the mean silhouette of every cut with `k` in `2..=n-1` and
/// keeps the best, preferring the smaller `k` on ties.
pub fn select_k(coords: &DMatrix<f64>, tree: &ClusterTree) -> Result<KSelection, ClusterError> {
    check_coords(coords, 3)?;
    let n = coords.nrows();
    let mut by_k = BTreeMap::new();
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 2..n {
        let assignment = cut(tree, k)?;
        let (_, mean) = silhouette(coords, &assignment)?;
        by_k.insert(k, mean);
        if mean > best.1 {
            best = (k, mean);
        }
    }
    Ok(KSelection {
        k_best: best.0,
        mean_silhouette_by_k: by_k,
    })
}
