//! Voxel grid geometry and the masked-voxel index map.
//!
//! Grid voxels are addressed by the linear index `x + nx * (y + ny * z)`.
//! Masked voxels are numbered in increasing linear-index order, so masked
//! index 0 is the in-mask voxel with the smallest linear index.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::MatrixContainer;
use crate::error::{Error, Result};

const OUTSIDE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGeometry {
    dims: [usize; 3],
    voxel_size_mm: [f64; 3],
    mask: Vec<bool>,
    masked: Vec<usize>,
    lookup: Vec<u32>,
}

/// On-disk geometry description; the mask lives in a separate container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryFile {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub mask_file: String,
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], voxel_size_mm: [f64; 3], mask: Vec<bool>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if voxel_size_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry(format!(
                "voxel sizes must be positive, got {voxel_size_mm:?}"
            )));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&n| n < OUTSIDE as usize)
            .ok_or_else(|| Error::Geometry("grid too large".into()))?;
        if mask.len() != n {
            return Err(Error::Geometry(format!(
                "mask has {} entries, grid has {n}",
                mask.len()
            )));
        }
        let masked: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if masked.is_empty() {
            return Err(Error::Geometry("empty mask".into()));
        }
        let mut lookup = vec![OUTSIDE; n];
        for (m, &lin) in masked.iter().enumerate() {
            lookup[lin] = m as u32;
        }
        Ok(Self {
            dims,
            voxel_size_mm,
            mask,
            masked,
            lookup,
        })
    }

    /// Geometry with every voxel in the mask.
    pub fn full(dims: [usize; 3], voxel_size_mm: [f64; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, voxel_size_mm, vec![true; n])
    }

    /// Mask is the ellipsoid inscribed in the grid (voxel centres within it).
    pub fn ellipsoid(dims: [usize; 3], voxel_size_mm: [f64; 3]) -> Result<Self> {
        let [nx, ny, nz] = dims;
        let mut mask = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let u = (x as f64 + 0.5) / nx as f64 * 2.0 - 1.0;
                    let v = (y as f64 + 0.5) / ny as f64 * 2.0 - 1.0;
                    let w = (z as f64 + 0.5) / nz as f64 * 2.0 - 1.0;
                    mask.push(u * u + v * v + w * w <= 1.0);
                }
            }
        }
        Self::new(dims, voxel_size_mm, mask)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.voxel_size_mm.iter().product()
    }

    pub fn n_grid(&self) -> usize {
        self.mask.len()
    }

    pub fn n_masked(&self) -> usize {
        self.masked.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords_of_linear(&self, lin: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [lin % nx, (lin / nx) % ny, lin / (nx * ny)]
    }

    /// Linear grid index of each masked voxel, in masked order.
    pub fn masked_linear(&self) -> &[usize] {
        &self.masked
    }

    pub fn coords(&self, masked_index: usize) -> [usize; 3] {
        self.coords_of_linear(self.masked[masked_index])
    }

    pub fn masked_index_of_linear(&self, lin: usize) -> Option<usize> {
        match self.lookup.get(lin) {
            Some(&m) if m != OUTSIDE => Some(m as usize),
            _ => None,
        }
    }

    pub fn masked_index(&self, xyz: [usize; 3]) -> Option<usize> {
        if xyz.iter().zip(self.dims).any(|(&c, d)| c >= d) {
            return None;
        }
        self.masked_index_of_linear(self.linear_index(xyz))
    }

    /// Scatters a masked-order field onto the full grid, filling outside voxels.
    pub fn to_grid(&self, masked_values: &[f64], fill: f64) -> Vec<f64> {
        let mut grid = vec![fill; self.n_grid()];
        for (&lin, &v) in self.masked.iter().zip(masked_values) {
            grid[lin] = v;
        }
        grid
    }

    pub fn from_grid(&self, grid: &[f64]) -> Vec<f64> {
        self.masked.iter().map(|&lin| grid[lin]).collect()
    }

    /// Same grid shape, voxel size and mask.
    pub fn same_space(&self, other: &VolumeGeometry) -> bool {
        self.dims == other.dims && self.voxel_size_mm == other.voxel_size_mm && self.mask == other.mask
    }

    pub fn mask_container(&self) -> MatrixContainer {
        let values = self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        MatrixContainer::row_vector(values).expect("non-empty grid")
    }

    /// Loads geometry JSON; `mask_file` is resolved relative to the JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GeometryFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let mask_path = resolve(path, &file.mask_file);
        let mask = MatrixContainer::read(&mask_path)?;
        let mask = mask
            .values()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::Geometry(format!("mask value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.dims, file.voxel_size_mm, mask)
    }

    /// Writes `<stem>.json` and the mask container next to it.
    pub fn save(&self, json_path: impl AsRef<Path>) -> Result<PathBuf> {
        let json_path = json_path.as_ref();
        let stem = json_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "geometry".into());
        let mask_name = format!("{stem}_mask.bin");
        let mask_path = json_path.with_file_name(&mask_name);
        self.mask_container().write(&mask_path)?;
        let file = GeometryFile {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            mask_file: mask_name,
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json("geometry", e))?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))?;
        Ok(mask_path)
    }
}

/// Resolves `rel` against the directory containing `anchor`.
pub fn resolve(anchor: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        anchor.parent().unwrap_or(Path::new(".")).join(p)
    }
}
