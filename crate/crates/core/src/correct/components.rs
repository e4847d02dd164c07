use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

/// Voxel neighbourhood: shared faces (6), faces or edges (18), or any
/// contact (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Face6,
    Edge18,
    Vertex26,
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::Face6
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Face6),
            18 => Ok(Connectivity::Edge18),
            26 => Ok(Connectivity::Vertex26),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18 or 26, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Face6 => 6,
            Connectivity::Edge18 => 18,
            Connectivity::Vertex26 => 26,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let max_nonzero = match self {
            Connectivity::Face6 => 1,
            Connectivity::Edge18 => 2,
            Connectivity::Vertex26 => 3,
        };
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let nz = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Masked voxel indices, ascending.
    pub voxels: Vec<usize>,
    /// +1 or -1 for signed clusters, 0 when sign is not tracked.
    pub sign: i8,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.voxels.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn max_size(&self) -> usize {
        self.clusters.iter().map(Cluster::size).max().unwrap_or(0)
    }
}

/// Reusable breadth-first labeller over one geometry.
pub(crate) struct Labeller<'g> {
    geom: &'g VolumeGeometry,
    offsets: Vec<[i64; 3]>,
    seen: Vec<bool>,
    queue: VecDeque<usize>,
}

impl<'g> Labeller<'g> {
    pub(crate) fn new(geom: &'g VolumeGeometry, connectivity: Connectivity) -> Self {
        Self {
            geom,
            offsets: connectivity.offsets(),
            seen: vec![false; geom.n_masked()],
            queue: VecDeque::new(),
        }
    }

    /// Calls `visit` with the sorted members of every component of `active`,
    /// in order of each component's smallest member.
    pub(crate) fn for_each_component(
        &mut self,
        active: &[bool],
        mut visit: impl FnMut(&[usize]),
    ) {
        let [nx, ny, nz] = self.geom.dims();
        let dims = [nx as i64, ny as i64, nz as i64];
        self.seen.iter_mut().for_each(|s| *s = false);
        let mut members = Vec::new();
        for start in 0..active.len() {
            if !active[start] || self.seen[start] {
                continue;
            }
            members.clear();
            self.seen[start] = true;
            self.queue.push_back(start);
            while let Some(v) = self.queue.pop_front() {
                members.push(v);
                let c = self.geom.coords(v);
                for off in &self.offsets {
                    let p = [c[0] as i64 + off[0], c[1] as i64 + off[1], c[2] as i64 + off[2]];
                    if p.iter().zip(dims).any(|(&q, d)| q < 0 || q >= d) {
                        continue;
                    }
                    let lin = self.geom.linear_index([p[0] as usize, p[1] as usize, p[2] as usize]);
                    if let Some(m) = self.geom.masked_index_of_linear(lin) {
                        if active[m] && !self.seen[m] {
                            self.seen[m] = true;
                            self.queue.push_back(m);
                        }
                    }
                }
            }
            members.sort_unstable();
            visit(&members);
        }
    }

    pub(crate) fn max_component(&mut self, active: &[bool]) -> usize {
        let mut best = 0;
        self.for_each_component(active, |m| best = best.max(m.len()));
        best
    }
}

/// Maximal connected components of the in-mask voxels flagged in `active`
/// (masked order).
pub fn connected_components(
    active: &[bool],
    geom: &VolumeGeometry,
    connectivity: Connectivity,
) -> Result<ClusterSet> {
    if active.len() != geom.n_masked() {
        return Err(Error::Shape(format!(
            "field has {} values, mask has {}",
            active.len(),
            geom.n_masked()
        )));
    }
    let mut clusters = Vec::new();
    Labeller::new(geom, connectivity).for_each_component(active, |m| {
        clusters.push(Cluster {
            voxels: m.to_vec(),
            sign: 0,
        })
    });
    Ok(ClusterSet { clusters })
}

/// Positive clusters of `values >= threshold` and negative clusters of
/// `values <= -threshold`, labelled separately.
pub fn signed_clusters(
    values: &[f32],
    threshold: f64,
    geom: &VolumeGeometry,
    connectivity: Connectivity,
) -> Result<ClusterSet> {
    let mut out = ClusterSet::default();
    for sign in [1i8, -1] {
        let active: Vec<bool> = values
            .iter()
            .map(|&v| {
                let v = v as f64 * sign as f64;
                v > 0.0 && v >= threshold
            })
            .collect();
        let mut set = connected_components(&active, geom, connectivity)?;
        for c in &mut set.clusters {
            c.sign = sign;
        }
        out.clusters.extend(set.clusters);
    }
    Ok(out)
}
