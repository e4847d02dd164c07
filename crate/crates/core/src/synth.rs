//! Seeded phantoms with planted responses, for end-to-end verification.
//!
//! Plain phantoms draw each label's annotations as independent Bernoulli
//! columns and add `effect · annotation` at the label's ROI voxels on top of
//! Gaussian noise. Hierarchy phantoms nest the positive rows of a
//! general→specific chain and plant one disjoint region per level, shaped so
//! that a label's per-voxel slope is zero on every region added below it.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::labels::LabelSet;
use crate::rng::{indexed_rng, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskShape {
    #[default]
    Ellipsoid,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomGeometry {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    #[serde(default)]
    pub mask: MaskShape,
}

impl PhantomGeometry {
    pub fn build(&self) -> Result<VolumeGeometry> {
        match self.mask {
            MaskShape::Ellipsoid => VolumeGeometry::ellipsoid(self.dims, self.voxel_size_mm),
            MaskShape::Full => VolumeGeometry::full(self.dims, self.voxel_size_mm),
        }
    }
}

impl Default for PhantomGeometry {
    fn default() -> Self {
        Self {
            dims: [16, 16, 16],
            voxel_size_mm: [2.0; 3],
            mask: MaskShape::Ellipsoid,
        }
    }
}

/// A planted region: explicit masked indices, or the `n_voxels` mask voxels
/// nearest a grid point (ties by linear index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiSpec {
    Voxels(Vec<usize>),
    Blob { center: [usize; 3], n_voxels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLabel {
    pub label: String,
    pub roi: RoiSpec,
    pub effect: f64,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
}

fn default_base_rate() -> f64 {
    0.5
}

fn default_subjects() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(default)]
    pub geometry: PhantomGeometry,
    pub labels: Vec<PlantedLabel>,
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_subjects")]
    pub n_subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTruth {
    pub label: String,
    pub roi: Vec<usize>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub labels: Vec<LabelTruth>,
    /// Per masked voxel, indices of the labels planted there.
    pub voxel_labels: Vec<Vec<usize>>,
    /// Hierarchy phantoms only: the region each level adds to its ancestor's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added_regions: Option<Vec<Vec<usize>>>,
}

impl PhantomTruth {
    fn from_rois(labels: Vec<LabelTruth>, n_masked: usize) -> Self {
        let mut voxel_labels = vec![Vec::new(); n_masked];
        for (l, t) in labels.iter().enumerate() {
            for &v in &t.roi {
                voxel_labels[v].push(l);
            }
        }
        Self {
            labels,
            voxel_labels,
            added_regions: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }
}

/// Annotations, one BOLD matrix per subject, and the planted truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub geometry: VolumeGeometry,
    pub labels: LabelSet,
    pub annotations: MatrixContainer,
    pub bold: Vec<MatrixContainer>,
    pub truth: PhantomTruth,
}

/// The `n` mask voxels nearest `center`, excluding `taken`, sorted.
pub fn blob_roi(
    geom: &VolumeGeometry,
    center: [usize; 3],
    n: usize,
    taken: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    let dims = geom.dims();
    if (0..3).any(|a| center[a] >= dims[a]) {
        return Err(Error::Geometry(format!("ROI centre {center:?} outside grid {dims:?}")));
    }
    let mut candidates: Vec<(usize, usize)> = (0..geom.n_masked())
        .filter(|v| !taken.contains(v))
        .map(|v| {
            let c = geom.coords(v);
            let d2 = (0..3).map(|a| c[a].abs_diff(center[a]).pow(2)).sum();
            (d2, v)
        })
        .collect();
    if candidates.len() < n || n == 0 {
        return Err(Error::Geometry(format!(
            "cannot place a {n}-voxel ROI, {} mask voxels available",
            candidates.len()
        )));
    }
    candidates.sort_unstable();
    let mut roi: Vec<usize> = candidates[..n].iter().map(|&(_, v)| v).collect();
    roi.sort_unstable();
    Ok(roi)
}

fn resolve_roi(geom: &VolumeGeometry, roi: &RoiSpec) -> Result<Vec<usize>> {
    match roi {
        RoiSpec::Voxels(v) => {
            if let Some(&bad) = v.iter().find(|&&i| i >= geom.n_masked()) {
                return Err(Error::Geometry(format!(
                    "ROI voxel {bad} outside mask of {} voxels",
                    geom.n_masked()
                )));
            }
            let set: BTreeSet<usize> = v.iter().copied().collect();
            Ok(set.into_iter().collect())
        }
        RoiSpec::Blob { center, n_voxels } => {
            let lin = geom.linear_index(*center);
            if geom.masked_index_of_linear(lin).is_none() {
                return Err(Error::Geometry(format!("ROI centre {center:?} outside mask")));
            }
            blob_roi(geom, *center, *n_voxels, &BTreeSet::new())
        }
    }
}

fn check_common(n_samples: usize, sigma: f64) -> Result<()> {
    if n_samples < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 samples, got {n_samples}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// Noise stream for one subject and sample row.
fn noise_rng(seed: u64, subject: usize, row: usize) -> rand_chacha::ChaCha8Rng {
    indexed_rng(seed, &format!("synth-noise/{subject}"), row as u64)
}

/// BOLD(i, v) = signal(i, v) + sigma · N(0, 1), computed in f64 and stored
/// as f32. `signal` fills one row at a time.
fn render_bold(
    n_samples: usize,
    n_voxels: usize,
    sigma: f64,
    seed: u64,
    subject: usize,
    signal: impl Fn(usize, &mut [f64]),
) -> Result<MatrixContainer> {
    let mut values = Vec::with_capacity(n_samples * n_voxels);
    let mut row = vec![0.0f64; n_voxels];
    for i in 0..n_samples {
        row.iter_mut().for_each(|v| *v = 0.0);
        signal(i, &mut row);
        if sigma > 0.0 {
            let mut rng = noise_rng(seed, subject, i);
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * z;
            }
        }
        values.extend(row.iter().map(|&v| v as f32));
    }
    MatrixContainer::new_finite(n_samples, n_voxels, values)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    check_common(spec.n_samples, spec.noise_sigma)?;
    if spec.n_subjects == 0 {
        return Err(Error::InvalidArgument("need at least one subject".into()));
    }
    let geom = spec.geometry.build()?;
    let labels = LabelSet::new(spec.labels.iter().map(|l| l.label.clone()).collect())?;
    let mut truths = Vec::with_capacity(spec.labels.len());
    for l in &spec.labels {
        if !(l.base_rate > 0.0 && l.base_rate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "base rate for {:?} must lie in (0, 1), got {}",
                l.label, l.base_rate
            )));
        }
        if !l.effect.is_finite() {
            return Err(Error::InvalidArgument(format!("effect for {:?} is not finite", l.label)));
        }
        truths.push(LabelTruth {
            label: l.label.clone(),
            roi: resolve_roi(&geom, &l.roi)?,
            slope: l.effect,
        });
    }
    let n = spec.n_samples;
    let n_labels = spec.labels.len();
    let mut annot = vec![0.0f32; n * n_labels];
    for (j, l) in spec.labels.iter().enumerate() {
        let mut rng = indexed_rng(spec.seed, "synth-annotation", j as u64);
        for i in 0..n {
            annot[i * n_labels + j] = (rng.random::<f64>() < l.base_rate) as u8 as f32;
        }
    }
    let annotations = MatrixContainer::new(n, n_labels, annot)?;
    let bold = (0..spec.n_subjects)
        .map(|s| {
            render_bold(n, geom.n_masked(), spec.noise_sigma, spec.seed, s, |i, row| {
                for (j, t) in truths.iter().enumerate() {
                    let a = annotations.get(i, j) as f64;
                    if a != 0.0 && t.slope != 0.0 {
                        for &v in &t.roi {
                            row[v] += t.slope * a;
                        }
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = PhantomTruth::from_rois(truths, geom.n_masked());
    Ok(Phantom {
        geometry: geom,
        labels,
        annotations,
        bold,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyOverrides {
    pub geometry: PhantomGeometry,
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub effect: f64,
    /// Voxels added per level.
    pub region_voxels: usize,
    /// Plant every level on one shared region instead of nesting.
    pub identical_rois: bool,
    pub seed: u64,
    pub n_subjects: usize,
}

impl Default for HierarchyOverrides {
    fn default() -> Self {
        Self {
            geometry: PhantomGeometry::default(),
            n_samples: 320,
            noise_sigma: 0.0,
            effect: 1.0,
            region_voxels: 40,
            identical_rois: false,
            seed: 0,
            n_subjects: 1,
        }
    }
}

/// Hierarchy phantom for a general→specific chain.
///
/// Rows are shuffled once; level `k` answers yes on the first
/// `m_k = n / 2^(k+1)` of them, so every yes implies yes for all ancestors.
/// Region `R_0` carries `effect · a_0`; each later region `R_k` carries
/// `effect · (a_k − (m_k / m_{k−1}) · a_{k−1})`, which has zero sample
/// covariance with every ancestor column and positive covariance with `a_k`
/// and its descendants. Label `k`'s ROI is `R_0 ∪ … ∪ R_k`.
pub fn generate_hierarchy_phantom(chain: &[String], o: &HierarchyOverrides) -> Result<Phantom> {
    if chain.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "hierarchy chain needs at least 2 labels, got {}",
            chain.len()
        )));
    }
    let labels = LabelSet::new(chain.to_vec())?;
    check_common(o.n_samples, o.noise_sigma)?;
    if o.n_subjects == 0 {
        return Err(Error::InvalidArgument("need at least one subject".into()));
    }
    let levels = chain.len();
    let n = o.n_samples;
    let counts: Vec<usize> = (0..levels).map(|k| n >> (k + 1)).collect();
    if counts[levels - 1] < 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples too few for a chain of {levels} levels"
        )));
    }
    let geom = o.geometry.build()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(o.seed, "synth-hierarchy", b"rows"));
    let mut annot = vec![0.0f32; n * levels];
    for (k, &m) in counts.iter().enumerate() {
        for &row in &order[..m] {
            annot[row * levels + k] = 1.0;
        }
    }
    let annotations = MatrixContainer::new(n, levels, annot)?;

    let dims = geom.dims();
    let mut taken = BTreeSet::new();
    let mut regions = Vec::with_capacity(levels);
    let n_regions = if o.identical_rois { 1 } else { levels };
    for k in 0..n_regions {
        // Centres spaced along x through the middle of the grid.
        let cx = (dims[0] * (2 * k + 1)) / (2 * n_regions);
        let region = blob_roi(&geom, [cx, dims[1] / 2, dims[2] / 2], o.region_voxels, &taken)?;
        taken.extend(region.iter().copied());
        regions.push(region);
    }

    let (truths, added_regions): (Vec<LabelTruth>, Option<Vec<Vec<usize>>>) = if o.identical_rois {
        let truths = chain
            .iter()
            .map(|l| LabelTruth {
                label: l.clone(),
                roi: regions[0].clone(),
                slope: o.effect,
            })
            .collect();
        (truths, None)
    } else {
        let mut roi = Vec::new();
        let truths = chain
            .iter()
            .zip(&regions)
            .map(|(l, r)| {
                roi.extend(r.iter().copied());
                roi.sort_unstable();
                LabelTruth {
                    label: l.clone(),
                    roi: roi.clone(),
                    slope: o.effect,
                }
            })
            .collect();
        (truths, Some(regions.clone()))
    };

    let effect = o.effect;
    let bold = (0..o.n_subjects)
        .map(|s| {
            render_bold(n, geom.n_masked(), o.noise_sigma, o.seed, s, |i, row| {
                let a = annotations.row(i);
                if o.identical_rois {
                    let y = effect * a.iter().map(|&v| v as f64).sum::<f64>();
                    for &v in &regions[0] {
                        row[v] = y;
                    }
                    return;
                }
                for (k, region) in regions.iter().enumerate() {
                    let y = if k == 0 {
                        effect * a[0] as f64
                    } else {
                        let q = counts[k] as f64 / counts[k - 1] as f64;
                        effect * (a[k] as f64 - q * a[k - 1] as f64)
                    };
                    for &v in region {
                        row[v] = y;
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut truth = PhantomTruth::from_rois(truths, geom.n_masked());
    truth.added_regions = added_regions;
    Ok(Phantom {
        geometry: geom,
        labels,
        annotations,
        bold,
        truth,
    })
}
