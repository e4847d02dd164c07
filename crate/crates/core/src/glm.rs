//! Voxelwise least-squares fits of responses on semantic regressors, and
//! the group-level one-sample t-test over subject slope maps.
//!
//! Degenerate conventions:
//! - constant response (`SStot == 0`): slope, t and r² are 0, p is 1;
//! - zero residual with nonzero slope: t is `±inf` and p is 0.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::container::MatrixContainer;
use crate::design::BalancedDesign;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::parallel::with_workers;
use crate::statmap::{Level, StatMap, StatMeta};
use crate::tdist::t_two_tailed_p;

/// Voxels per parallel work unit. Fixed so results never depend on the
/// worker count.
const VOXEL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsResult {
    pub beta0: f64,
    pub beta1: f64,
    pub se1: f64,
    pub t: f64,
    pub r2: f64,
    pub p: f64,
    pub df: u64,
}

impl OlsResult {
    /// Constant response or zero-residual fit.
    pub fn is_degenerate(&self) -> bool {
        self.se1 == 0.0
    }
}

/// A regressor with its centring terms precomputed, reused across voxels.
#[derive(Debug, Clone)]
pub struct OlsDesign {
    x_mean: f64,
    x_centered: Vec<f64>,
    sxx: f64,
}

impl OlsDesign {
    pub fn new(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 3 {
            return Err(Error::Regression(format!("need at least 3 samples, got {n}")));
        }
        let x_mean = x.iter().sum::<f64>() / n as f64;
        let x_centered: Vec<f64> = x.iter().map(|&v| v - x_mean).collect();
        let sxx: f64 = x_centered.iter().map(|v| v * v).sum();
        if !(sxx > 0.0) {
            return Err(Error::Regression("regressor is constant".into()));
        }
        Ok(Self {
            x_mean,
            x_centered,
            sxx,
        })
    }

    pub fn n(&self) -> usize {
        self.x_centered.len()
    }

    pub fn fit(&self, y: &[f64]) -> OlsResult {
        debug_assert_eq!(y.len(), self.n());
        let n = self.n();
        let df = (n - 2) as u64;
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut sxy = 0.0;
        let mut syy = 0.0;
        for (&xc, &yv) in self.x_centered.iter().zip(y) {
            let yc = yv - y_mean;
            sxy += xc * yc;
            syy += yc * yc;
        }
        if syy == 0.0 {
            return OlsResult {
                beta0: y_mean,
                beta1: 0.0,
                se1: 0.0,
                t: 0.0,
                r2: 0.0,
                p: 1.0,
                df,
            };
        }
        let beta1 = sxy / self.sxx;
        let beta0 = y_mean - beta1 * self.x_mean;
        let sse: f64 = self
            .x_centered
            .iter()
            .zip(y)
            .map(|(&xc, &yv)| {
                let e = yv - y_mean - beta1 * xc;
                e * e
            })
            .sum();
        let r2 = (1.0 - sse / syy).clamp(0.0, 1.0);
        let se1 = (sse / df as f64 / self.sxx).sqrt();
        let (t, p) = if se1 == 0.0 {
            (f64::INFINITY.copysign(beta1), 0.0)
        } else {
            let t = beta1 / se1;
            (t, t_two_tailed_p(t, df as f64))
        };
        OlsResult {
            beta0,
            beta1,
            se1,
            t,
            r2,
            p,
            df,
        }
    }
}

/// Ordinary least squares of `y` on `x` with intercept.
pub fn simple_ols(x: &[f64], y: &[f64]) -> Result<OlsResult> {
    if x.len() != y.len() {
        return Err(Error::Regression(format!(
            "x has {} samples, y has {}",
            x.len(),
            y.len()
        )));
    }
    Ok(OlsDesign::new(x)?.fit(y))
}

/// Copies the columns `start..start+width` into one contiguous `f64` buffer
/// per voxel.
fn gather_columns(bold: &MatrixContainer, start: usize, width: usize) -> Vec<Vec<f64>> {
    let n = bold.n_rows();
    let mut cols = vec![Vec::with_capacity(n); width];
    for r in 0..n {
        let row = &bold.row(r)[start..start + width];
        for (col, &v) in cols.iter_mut().zip(row) {
            col.push(v as f64);
        }
    }
    cols
}

fn chunk_starts(n_voxels: usize) -> Vec<(usize, usize)> {
    (0..n_voxels)
        .step_by(VOXEL_CHUNK)
        .map(|s| (s, VOXEL_CHUNK.min(n_voxels - s)))
        .collect()
}

/// Subject-level map for one label: `simple_ols` at every voxel (column).
///
/// `bold` and `column` must already be aligned, and trimmed to the design's
/// kept rows when a design is supplied; the design is only recorded in the
/// map metadata.
pub fn fit_label_map(
    bold: &MatrixContainer,
    column: &[f32],
    label: &str,
    design: Option<&BalancedDesign>,
    workers: usize,
) -> Result<StatMap> {
    if bold.n_rows() != column.len() {
        return Err(Error::Shape(format!(
            "response has {} rows, regressor has {}",
            bold.n_rows(),
            column.len()
        )));
    }
    let x: Vec<f64> = column.iter().map(|&v| v as f64).collect();
    let ols = OlsDesign::new(&x)?;
    let n_voxels = bold.n_cols();
    let chunks = chunk_starts(n_voxels);
    let results: Vec<Vec<OlsResult>> = with_workers(workers, || {
        chunks
            .par_iter()
            .map(|&(start, width)| {
                gather_columns(bold, start, width)
                    .iter()
                    .map(|y| ols.fit(y))
                    .collect()
            })
            .collect()
    })?;
    let mut map = StatMap::empty(label, Level::Subject, (x.len() - 2) as u64, n_voxels);
    let mut degenerate = 0;
    for (v, r) in results.into_iter().flatten().enumerate() {
        map.beta[v] = r.beta1 as f32;
        map.se[v] = r.se1 as f32;
        map.t[v] = r.t as f32;
        map.r2[v] = r.r2 as f32;
        map.p[v] = r.p as f32;
        degenerate += r.is_degenerate() as usize;
    }
    map.meta = StatMeta {
        seed: design.map(|d| d.seed),
        design_hash: design.map(BalancedDesign::hash),
        degenerate_voxels: degenerate,
        n_samples: Some(x.len()),
    };
    Ok(map)
}

/// One multiple regression over all labels (no balancing); returns one map
/// per label holding that label's partial slope, with the model r².
pub fn fit_multivariate(
    bold: &MatrixContainer,
    annotations: &MatrixContainer,
    labels: &LabelSet,
    workers: usize,
) -> Result<Vec<StatMap>> {
    let n = bold.n_rows();
    let n_labels = labels.len();
    if annotations.n_rows() != n || annotations.n_cols() != n_labels {
        return Err(Error::Shape(format!(
            "annotations are {}x{}, expected {n}x{n_labels}",
            annotations.n_rows(),
            annotations.n_cols()
        )));
    }
    let p = n_labels + 1;
    if n <= p {
        return Err(Error::Regression(format!(
            "{n} samples cannot support {p} coefficients"
        )));
    }
    let df = n - p;
    let design = DMatrix::from_fn(n, p, |r, c| {
        if c == 0 {
            1.0
        } else {
            annotations.get(r, c - 1) as f64
        }
    });
    let gram = design.transpose() * &design;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Regression("design matrix is rank deficient".into()))?;
    let n_voxels = bold.n_cols();
    let chunks = chunk_starts(n_voxels);
    let fits: Vec<Vec<(Vec<f64>, f64, f64)>> = with_workers(workers, || {
        chunks
            .par_iter()
            .map(|&(start, width)| {
                gather_columns(bold, start, width)
                    .iter()
                    .map(|y| {
                        let xty: Vec<f64> = (0..p)
                            .map(|c| design.column(c).iter().zip(y).map(|(a, b)| a * b).sum())
                            .collect();
                        let beta: Vec<f64> = (0..p)
                            .map(|r| (0..p).map(|c| gram_inv[(r, c)] * xty[c]).sum())
                            .collect();
                        let y_mean = y.iter().sum::<f64>() / n as f64;
                        let mut sse = 0.0;
                        let mut syy = 0.0;
                        for (r, &yv) in y.iter().enumerate() {
                            let fitted: f64 = (0..p).map(|c| design[(r, c)] * beta[c]).sum();
                            sse += (yv - fitted) * (yv - fitted);
                            syy += (yv - y_mean) * (yv - y_mean);
                        }
                        (beta, sse, syy)
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut maps: Vec<StatMap> = labels
        .iter()
        .map(|l| {
            let mut m = StatMap::empty(l, Level::Subject, df as u64, n_voxels);
            m.meta.n_samples = Some(n);
            m
        })
        .collect();
    for (v, (beta, sse, syy)) in fits.into_iter().flatten().enumerate() {
        let degenerate = syy == 0.0 || sse == 0.0;
        let r2 = if syy == 0.0 { 0.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
        for (j, map) in maps.iter_mut().enumerate() {
            let b = if syy == 0.0 { 0.0 } else { beta[j + 1] };
            let se = (sse / df as f64 * gram_inv[(j + 1, j + 1)]).sqrt();
            let (t, pv) = if syy == 0.0 || (se == 0.0 && b == 0.0) {
                (0.0, 1.0)
            } else if se == 0.0 {
                (f64::INFINITY.copysign(b), 0.0)
            } else {
                let t = b / se;
                (t, t_two_tailed_p(t, df as f64))
            };
            map.beta[v] = b as f32;
            map.se[v] = se as f32;
            map.t[v] = t as f32;
            map.r2[v] = r2 as f32;
            map.p[v] = pv as f32;
            map.meta.degenerate_voxels += degenerate as usize;
        }
    }
    Ok(maps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSampleT {
    pub mean: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub df: u64,
}

/// One-sample t-test against zero. Values are summed in sorted order, so
/// any permutation of the input gives bitwise-identical output.
pub fn one_sample_t(values: &[f64]) -> Result<OneSampleT> {
    let s = values.len();
    if s < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 subjects, got {s}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite subject value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let df = (s - 1) as u64;
    let mean = sorted.iter().sum::<f64>() / s as f64;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df as f64;
    let se = (var / s as f64).sqrt();
    let (t, p) = if se == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / se;
        (t, t_two_tailed_p(t, df as f64))
    };
    Ok(OneSampleT { mean, se, t, p, df })
}

/// Group-level map from per-subject slope arrays (all in masked order).
///
/// `r2` holds the effect-size analogue `t² / (t² + df)`.
pub fn group_ttest(label: &str, subject_values: &[&[f32]], workers: usize) -> Result<StatMap> {
    let s = subject_values.len();
    if s < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 subjects, got {s}")));
    }
    let n_voxels = subject_values[0].len();
    if subject_values.iter().any(|v| v.len() != n_voxels) {
        return Err(Error::Mismatch("subject maps differ in voxel count".into()));
    }
    let tests: Vec<OneSampleT> = with_workers(workers, || {
        (0..n_voxels)
            .into_par_iter()
            .with_min_len(VOXEL_CHUNK)
            .map(|v| {
                let vals: Vec<f64> = subject_values.iter().map(|m| m[v] as f64).collect();
                one_sample_t(&vals)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let df = (s - 1) as u64;
    let mut map = StatMap::empty(label, Level::Group, df, n_voxels);
    for (v, r) in tests.iter().enumerate() {
        map.beta[v] = r.mean as f32;
        map.se[v] = r.se as f32;
        map.t[v] = r.t as f32;
        map.p[v] = r.p as f32;
        map.r2[v] = if r.t.is_infinite() {
            1.0
        } else {
            (r.t * r.t / (r.t * r.t + df as f64)) as f32
        };
        map.meta.degenerate_voxels += (r.se == 0.0) as usize;
    }
    Ok(map)
}
