//! Cluster-extent correction of statistic maps.
//!
//! A Monte Carlo null of smoothed Gaussian fields on the mask calibrates the
//! smallest cluster size whose familywise exceedance probability stays at or
//! below `alpha`; maps are then thresholded voxelwise and only clusters of at
//! least that size survive.

mod components;
mod smooth;

pub use components::{connected_components, signed_clusters, Cluster, ClusterSet, Connectivity};
pub use smooth::{fwhm_to_sigma, gaussian_smooth, Smoother};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::parallel::with_workers;
use crate::rng::indexed_rng;
use crate::statmap::{Level, StatMap};
use crate::tdist::{normal_critical, t_critical};

use components::Labeller;

pub const MIN_ITERATIONS: usize = 100;

/// Inputs of the null simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub voxel_p: f64,
    pub fwhm_mm: f64,
    pub connectivity: Connectivity,
    pub n_iterations: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Degrees of freedom of the maps this threshold will be applied to;
    /// recorded for audit; the simulation itself works on the z scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<u64>,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            voxel_p: 0.05,
            fwhm_mm: 3.0,
            connectivity: Connectivity::Face6,
            n_iterations: 1000,
            alpha: 0.05,
            seed: 0,
            df: None,
        }
    }
}

/// Result of the null simulation, with the full histogram of per-iteration
/// maximum cluster sizes (`histogram[k]` = iterations whose max was `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterThreshold {
    #[serde(flatten)]
    pub params: McParams,
    pub z_critical: f64,
    pub min_cluster_voxels: usize,
    pub min_cluster_mm3: f64,
    pub voxel_volume_mm3: f64,
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub n_masked: usize,
    pub histogram: Vec<u64>,
}

impl ClusterThreshold {
    /// `P(max cluster >= k)` for `k = 0..=max observed + 1`.
    pub fn exceedance(&self) -> Vec<f64> {
        exceedance_from_histogram(&self.histogram)
    }

    pub fn matches(&self, geom: &VolumeGeometry) -> bool {
        self.dims == geom.dims()
            && self.voxel_size_mm == geom.voxel_size_mm()
            && self.n_masked == geom.n_masked()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("cluster threshold", e))
    }
}

fn exceedance_from_histogram(histogram: &[u64]) -> Vec<f64> {
    let total: u64 = histogram.iter().sum();
    let mut out = vec![0.0; histogram.len() + 1];
    let mut tail = 0u64;
    for k in (0..histogram.len()).rev() {
        tail += histogram[k];
        out[k] = tail as f64 / total as f64;
    }
    out
}

/// Smallest `k >= 1` with `P(max >= k) <= alpha`.
fn min_cluster_from_histogram(histogram: &[u64], alpha: f64) -> usize {
    let exceed = exceedance_from_histogram(histogram);
    (1..exceed.len())
        .find(|&k| exceed[k] <= alpha)
        .unwrap_or(exceed.len())
        .max(1)
}

/// Largest per-sign cluster in one null field.
fn null_max_cluster(
    geom: &VolumeGeometry,
    smoother: &Smoother<'_>,
    scale: &[f64],
    z_crit: f64,
    connectivity: Connectivity,
    seed: u64,
    iteration: u64,
) -> usize {
    let mut rng = indexed_rng(seed, "mc-null", iteration);
    let noise: Vec<f64> = (0..geom.n_masked())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let field = smoother.smooth(&noise);
    let z: Vec<f64> = field.iter().zip(scale).map(|(v, s)| v * s).collect();
    let mut labeller = Labeller::new(geom, connectivity);
    let pos: Vec<bool> = z.iter().map(|&v| v > z_crit).collect();
    let neg: Vec<bool> = z.iter().map(|&v| v < -z_crit).collect();
    labeller.max_component(&pos).max(labeller.max_component(&neg))
}

/// Monte Carlo cluster-size threshold.
///
/// Each iteration draws iid N(0,1) on the mask (a ChaCha8 stream keyed by
/// seed and iteration index), smooths it, rescales every voxel by the
/// analytic standard deviation of the smoothed null so the field has unit
/// variance, thresholds `|z|` at the two-tailed normal critical value and
/// records the largest positive or negative cluster.
pub fn mc_cluster_threshold(
    geom: &VolumeGeometry,
    params: &McParams,
    workers: usize,
) -> Result<ClusterThreshold> {
    if !(params.voxel_p > 0.0 && params.voxel_p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "voxel p must lie in (0, 1), got {}",
            params.voxel_p
        )));
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {}",
            params.alpha
        )));
    }
    if params.n_iterations < MIN_ITERATIONS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_ITERATIONS} iterations required, got {}",
            params.n_iterations
        )));
    }
    let smoother = Smoother::new(geom, params.fwhm_mm)?;
    let scale: Vec<f64> = smoother.null_variance().iter().map(|v| 1.0 / v.sqrt()).collect();
    let z_crit = normal_critical(params.voxel_p)?;
    let maxima: Vec<usize> = with_workers(workers, || {
        (0..params.n_iterations as u64)
            .into_par_iter()
            .map(|i| {
                null_max_cluster(geom, &smoother, &scale, z_crit, params.connectivity, params.seed, i)
            })
            .collect()
    })?;
    let top = maxima.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0u64; top + 1];
    for m in maxima {
        histogram[m] += 1;
    }
    let min_cluster_voxels = min_cluster_from_histogram(&histogram, params.alpha);
    let voxel_volume_mm3 = geom.voxel_volume_mm3();
    Ok(ClusterThreshold {
        params: params.clone(),
        z_critical: z_crit,
        min_cluster_voxels,
        min_cluster_mm3: min_cluster_voxels as f64 * voxel_volume_mm3,
        voxel_volume_mm3,
        dims: geom.dims(),
        voxel_size_mm: geom.voxel_size_mm(),
        n_masked: geom.n_masked(),
        histogram,
    })
}

/// Zeroes every voxel outside a surviving cluster.
///
/// Voxels pass the voxel threshold when `|t| >= t_critical(voxel_p, df)`;
/// positive and negative voxels are clustered separately and clusters with
/// fewer than `min_cluster_voxels` voxels are removed. Surviving voxels keep
/// all their statistics; removed voxels get zero beta, se, t and r2 and p = 1.
pub fn apply_correction(
    map: &StatMap,
    threshold: &ClusterThreshold,
    geom: &VolumeGeometry,
) -> Result<StatMap> {
    if !threshold.matches(geom) {
        return Err(Error::Mismatch(
            "cluster threshold was simulated on a different geometry".into(),
        ));
    }
    if map.n_voxels() != geom.n_masked() {
        return Err(Error::Mismatch(format!(
            "map {:?} has {} voxels, mask has {}",
            map.label,
            map.n_voxels(),
            geom.n_masked()
        )));
    }
    if map.df == 0 {
        return Err(Error::InvalidArgument(format!("map {:?} has df = 0", map.label)));
    }
    let t_crit = t_critical(threshold.params.voxel_p, map.df as f64)?;
    let clusters = signed_clusters(&map.t, t_crit, geom, threshold.params.connectivity)?;
    let mut keep = vec![false; map.n_voxels()];
    for c in clusters.clusters.iter().filter(|c| c.size() >= threshold.min_cluster_voxels) {
        for &v in &c.voxels {
            keep[v] = true;
        }
    }
    let mut out = map.clone();
    out.level = Level::Corrected;
    for (v, &k) in keep.iter().enumerate() {
        if !k {
            out.beta[v] = 0.0;
            out.se[v] = 0.0;
            out.t[v] = 0.0;
            out.r2[v] = 0.0;
            out.p[v] = 1.0;
        }
    }
    Ok(out)
}
