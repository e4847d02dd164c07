//! Separable Gaussian smoothing restricted to the mask.
//!
//! Each axis pass convolves with a Gaussian truncated at ±4σ and divides by
//! the kernel mass that falls on in-mask voxels, so constants are preserved
//! and masked-out voxels never contribute.

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4; // 2 * sqrt(2 ln 2)
const TRUNCATE_SIGMAS: f64 = 4.0;

/// Gaussian sigma in voxel units for a kernel of the given FWHM.
pub fn fwhm_to_sigma(fwhm_mm: f64, voxel_size_mm: f64) -> Result<f64> {
    if !(fwhm_mm >= 0.0) || !fwhm_mm.is_finite() {
        return Err(Error::InvalidArgument(format!("fwhm must be >= 0, got {fwhm_mm}")));
    }
    if !(voxel_size_mm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voxel size must be > 0, got {voxel_size_mm}"
        )));
    }
    Ok(fwhm_mm / FWHM_PER_SIGMA / voxel_size_mm)
}

/// Half-kernel weights `w[k] = exp(-k² / 2σ²)` for `0 <= k <= 4σ`.
fn half_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (TRUNCATE_SIGMAS * sigma).floor() as usize;
    (0..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Precomputed smoothing operator for one geometry and kernel width.
#[derive(Debug, Clone)]
pub struct Smoother<'g> {
    geom: &'g VolumeGeometry,
    kernels: [Vec<f64>; 3],
    identity: bool,
}

impl<'g> Smoother<'g> {
    pub fn new(geom: &'g VolumeGeometry, fwhm_mm: f64) -> Result<Self> {
        let sizes = geom.voxel_size_mm();
        let mut kernels: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            kernels[a] = half_kernel(fwhm_to_sigma(fwhm_mm, sizes[a])?);
        }
        let identity = kernels.iter().all(|k| k.len() == 1);
        Ok(Self {
            geom,
            kernels,
            identity,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Smooths a masked-order field.
    pub fn smooth(&self, field: &[f64]) -> Vec<f64> {
        if self.identity {
            return field.to_vec();
        }
        let mut grid = self.geom.to_grid(field, 0.0);
        let mut scratch = vec![0.0; grid.len()];
        for axis in 0..3 {
            self.pass(axis, &grid, &mut scratch, false);
            std::mem::swap(&mut grid, &mut scratch);
        }
        self.geom.from_grid(&grid)
    }

    /// Per-voxel variance of the smoothed field when the input is iid with
    /// unit variance.
    pub fn null_variance(&self) -> Vec<f64> {
        if self.identity {
            return vec![1.0; self.geom.n_masked()];
        }
        let mut grid = self.geom.to_grid(&vec![1.0; self.geom.n_masked()], 0.0);
        let mut scratch = vec![0.0; grid.len()];
        for axis in 0..3 {
            self.pass(axis, &grid, &mut scratch, true);
            std::mem::swap(&mut grid, &mut scratch);
        }
        self.geom.from_grid(&grid)
    }

    /// One axis pass. With `squared`, applies the squared normalized weights
    /// instead (variance propagation).
    fn pass(&self, axis: usize, src: &[f64], dst: &mut [f64], squared: bool) {
        let [nx, ny, nz] = self.geom.dims();
        let mask = self.geom.mask();
        let kernel = &self.kernels[axis];
        let radius = kernel.len() - 1;
        let (len, stride) = match axis {
            0 => (nx, 1),
            1 => (ny, nx),
            _ => (nz, nx * ny),
        };
        dst.iter_mut().for_each(|v| *v = 0.0);
        let n_lines = nx * ny * nz / len;
        for line in 0..n_lines {
            let base = match axis {
                0 => line * nx,
                1 => (line / nx) * nx * ny + line % nx,
                _ => line,
            };
            for i in 0..len {
                let centre = base + i * stride;
                if !mask[centre] {
                    continue;
                }
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(len - 1);
                let mut num = 0.0;
                let mut den = 0.0;
                for j in lo..=hi {
                    let idx = base + j * stride;
                    if mask[idx] {
                        let w = kernel[i.abs_diff(j)];
                        den += w;
                        num += if squared { w * w * src[idx] } else { w * src[idx] };
                    }
                }
                dst[centre] = if squared { num / (den * den) } else { num / den };
            }
        }
    }
}

/// Smooths a masked-order field at the given FWHM.
pub fn gaussian_smooth(field: &[f64], geom: &VolumeGeometry, fwhm_mm: f64) -> Result<Vec<f64>> {
    if field.len() != geom.n_masked() {
        return Err(Error::Shape(format!(
            "field has {} values, mask has {}",
            field.len(),
            geom.n_masked()
        )));
    }
    Ok(Smoother::new(geom, fwhm_mm)?.smooth(field))
}
