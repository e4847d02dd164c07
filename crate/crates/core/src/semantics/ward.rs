//! Ward agglomerative clustering on a label distance matrix.
//!
//! The Lance–Williams recurrence runs on squared distances and merge heights
//! are reported as square roots (the Ward-D2 convention). Each live cluster
//! sits in the slot of its smallest member label; among equal merge costs the
//! lexicographically smallest slot pair wins.

use serde::{Deserialize, Serialize};

use super::SquareMatrix;
use crate::error::{Error, Result};

/// One merge. Cluster ids follow the usual linkage convention: leaves are
/// `0..n`, the cluster created at step `s` is `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub step: usize,
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dendrogram {
    merges: Vec<(usize, usize, usize, f64)>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.merges.len() + 1
    }

    pub fn merges(&self) -> impl Iterator<Item = Merge> + '_ {
        self.merges.iter().map(|&(step, left, right, height)| Merge {
            step,
            left,
            right,
            height,
        })
    }

    /// Flat assignment after undoing merges until `k` clusters remain.
    /// Cluster ids are numbered by first appearance in leaf order.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves();
        if k < 1 || k > n {
            return Err(Error::InvalidArgument(format!(
                "cluster count {k} outside 1..={n}"
            )));
        }
        // Union-find over leaves plus merged nodes.
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, &(_, left, right, _)) in self.merges.iter().take(n - k).enumerate() {
            let node = n + s;
            let a = find(&mut parent, left);
            let b = find(&mut parent, right);
            parent[a] = node;
            parent[b] = node;
        }
        let mut ids = std::collections::HashMap::new();
        Ok((0..n)
            .map(|leaf| {
                let root = find(&mut parent, leaf);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect())
    }
}

/// Full Ward-D2 merge sequence for a distance matrix.
pub fn ward_linkage(distance: &SquareMatrix) -> Result<Dendrogram> {
    let n = distance.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty distance matrix".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let d = distance.get(i, j);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidArgument(format!("invalid distance {d} at ({i}, {j})")));
            }
        }
    }
    let mut d2: Vec<f64> = distance.values().iter().map(|d| d * d).collect();
    let mut size = vec![1usize; n];
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let cost = d2[i * n + j];
                if best.map_or(true, |(c, _, _)| cost < c) {
                    best = Some((cost, i, j));
                }
            }
        }
        let (cost, i, j) = best.expect("at least two live clusters");
        merges.push((step, node_id[i], node_id[j], cost.max(0.0).sqrt()));
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !alive[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((ni + nk) * d2[i * n + k] + (nj + nk) * d2[j * n + k] - nk * cost)
                / (ni + nj + nk);
            d2[i * n + k] = updated;
            d2[k * n + i] = updated;
        }
        alive[j] = false;
        size[i] += size[j];
        node_id[i] = n + step;
    }
    Ok(Dendrogram { merges })
}

/// Ward-D2 linkage cut at `k` clusters.
pub fn ward_cluster(distance: &SquareMatrix, k: usize) -> Result<(Dendrogram, Vec<usize>)> {
    if k < 1 || k > distance.n() {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} outside 1..={}",
            distance.n()
        )));
    }
    let dendrogram = ward_linkage(distance)?;
    let assignment = dendrogram.cut(k)?;
    Ok((dendrogram, assignment))
}
