//! Organisation of per-label maps: overlay counts, hierarchy overlays,
//! label similarity and distance, Ward clustering, cluster means and the
//! thresholded semantic network.

mod network;
mod overlay;
mod ward;

pub use network::{build_network, Edge, Node, SemanticNetwork, DEFAULT_EDGE_THRESHOLD};
pub use overlay::{hierarchy_overlay, overlay_counts, OverlayCategory, OverlayCounts};
pub use ward::{ward_cluster, ward_linkage, Dendrogram, Merge};

use rayon::prelude::*;

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::parallel::with_workers;
use crate::statmap::StatMap;

pub const DEFAULT_CLUSTER_COUNT: usize = 5;

/// Ordered labels from general to specific, e.g. animal → mammal → human → man.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct HierarchyChain(Vec<String>);

impl HierarchyChain {
    pub fn new(labels: Vec<String>, within: &LabelSet) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "hierarchy chain needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("label {l:?} repeated in chain")));
            }
            if within.position(l).is_none() {
                return Err(Error::InvalidArgument(format!("chain label {l:?} not in label set")));
            }
        }
        Ok(Self(labels))
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    /// Consecutive (upper, lower) pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.windows(2).map(|w| (w[0].as_str(), w[1].as_str()))
    }
}

/// Dense row-major square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_container(&self) -> Result<MatrixContainer> {
        MatrixContainer::from_f64(self.n, self.n, &self.values)
    }

    pub fn from_container(c: &MatrixContainer) -> Result<Self> {
        if c.n_rows() != c.n_cols() {
            return Err(Error::Shape(format!(
                "expected a square matrix, got {}x{}",
                c.n_rows(),
                c.n_cols()
            )));
        }
        Self::from_values(c.n_rows(), c.values().iter().map(|&v| v as f64).collect())
    }
}

/// Pearson correlation of two equal-length vectors (two-pass).
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Label × label Pearson correlation of one statistic over masked voxels.
/// The diagonal is exactly 1 and the matrix exactly symmetric.
pub fn similarity_matrix(maps: &[&StatMap], statistic: &str, workers: usize) -> Result<SquareMatrix> {
    if maps.len() < 2 {
        return Err(Error::InvalidArgument("similarity needs at least two maps".into()));
    }
    let n_vox = maps[0].n_voxels();
    let mut vectors = Vec::with_capacity(maps.len());
    for m in maps {
        if m.n_voxels() != n_vox {
            return Err(Error::Mismatch(format!(
                "map {:?} has {} voxels, expected {n_vox}",
                m.label,
                m.n_voxels()
            )));
        }
        let values = m
            .statistic(statistic)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown statistic {statistic:?}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "map {:?} has non-finite {statistic}",
                m.label
            )));
        }
        if values.iter().all(|&v| v == values[0]) {
            return Err(Error::InvalidArgument(format!(
                "map {:?} has constant {statistic}",
                m.label
            )));
        }
        vectors.push(values.iter().map(|&v| v as f64).collect::<Vec<f64>>());
    }
    let l = maps.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| ((i + 1)..l).map(move |j| (i, j))).collect();
    let rs: Vec<f64> = with_workers(workers, || {
        pairs
            .par_iter()
            .map(|&(i, j)| pearson(&vectors[i], &vectors[j]).expect("non-constant"))
            .collect()
    })?;
    let mut out = SquareMatrix::identity(l);
    for (&(i, j), r) in pairs.iter().zip(rs) {
        out.set(i, j, r);
        out.set(j, i, r);
    }
    Ok(out)
}

/// `distance = 1 − similarity`, elementwise.
pub fn to_distance(similarity: &SquareMatrix) -> Result<SquareMatrix> {
    let n = similarity.n();
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let s = similarity.get(i, j);
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "similarity {s} at ({i}, {j}) outside [-1, 1]"
                )));
            }
            if s != similarity.get(j, i) {
                return Err(Error::InvalidArgument(format!(
                    "similarity is not symmetric at ({i}, {j})"
                )));
            }
            if i == j && s != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is {s}, not 1")));
            }
            out.set(i, j, 1.0 - s);
        }
    }
    Ok(out)
}

/// Voxelwise mean t-map of each cluster's members.
pub fn cluster_mean_maps(maps: &[&StatMap], assignment: &[usize]) -> Result<Vec<Vec<f32>>> {
    if maps.len() != assignment.len() {
        return Err(Error::Shape(format!(
            "{} maps but {} assignments",
            maps.len(),
            assignment.len()
        )));
    }
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let n_vox = maps.first().map_or(0, |m| m.n_voxels());
    let mut sums = vec![vec![0.0f64; n_vox]; k];
    let mut counts = vec![0usize; k];
    for (m, &c) in maps.iter().zip(assignment) {
        if m.n_voxels() != n_vox {
            return Err(Error::Mismatch(format!("map {:?} differs in voxel count", m.label)));
        }
        counts[c] += 1;
        for (s, &t) in sums[c].iter_mut().zip(&m.t) {
            *s += t as f64;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("cluster {empty} has no members")));
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| (v / c as f64) as f32).collect())
        .collect())
}
