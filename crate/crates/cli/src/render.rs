//! Binary PPM rendering of map slices and square matrices.
//!
//! Colormap: values are scaled linearly from `[min, max]` to `f ∈ [0, 1]`;
//! `f ≤ 0.5` runs from blue (0, 0, 255) to white, `f ≥ 0.5` from white to
//! red (255, 0, 0), channels rounded to nearest. A constant field maps to
//! white. Pixels outside the mask are black.

use anyhow::{bail, Result};
use corsem_core::VolumeGeometry;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn diverging(f: f64) -> [u8; 3] {
    let f = f.clamp(0.0, 1.0);
    if f <= 0.5 {
        let c = (255.0 * (f / 0.5)).round() as u8;
        [c, c, 255]
    } else {
        let c = (255.0 * ((1.0 - f) / 0.5)).round() as u8;
        [255, c, c]
    }
}

fn scale(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    move |v| {
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.5
        }
    }
}

fn ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6 {width} {height} 255\n").into_bytes();
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

/// One slice of a masked-order field. The image's rows run along the
/// second remaining axis, columns along the first (for `Z`: x across, y
/// down). Min and max are taken over the in-mask voxels of that slice.
pub fn render_map(
    values: &[f32],
    geom: &VolumeGeometry,
    axis: Axis,
    slice: usize,
) -> Result<Vec<u8>> {
    if values.len() != geom.n_masked() {
        bail!("field has {} values, mask has {}", values.len(), geom.n_masked());
    }
    let [nx, ny, nz] = geom.dims();
    let (along, w, h) = match axis {
        Axis::X => (nx, ny, nz),
        Axis::Y => (ny, nx, nz),
        Axis::Z => (nz, nx, ny),
    };
    if slice >= along {
        bail!("slice {slice} out of range for axis of length {along}");
    }
    let coord = |c: usize, r: usize| match axis {
        Axis::X => [slice, c, r],
        Axis::Y => [c, slice, r],
        Axis::Z => [c, r, slice],
    };
    let cells: Vec<Option<f64>> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (c, r)))
        .map(|(c, r)| geom.masked_index(coord(c, r)).map(|v| values[v] as f64))
        .collect();
    if cells.iter().flatten().any(|v| !v.is_finite()) {
        bail!("field has non-finite values in slice {slice}");
    }
    let f = scale(cells.iter().flatten().copied());
    let pixels: Vec<[u8; 3]> = cells
        .iter()
        .map(|c| c.map_or([0, 0, 0], |v| diverging(f(v))))
        .collect();
    Ok(ppm(w, h, &pixels))
}

/// Row-major matrix, one pixel per entry.
pub fn render_matrix(values: &[f64], n_rows: usize, n_cols: usize) -> Result<Vec<u8>> {
    if values.len() != n_rows * n_cols || values.is_empty() {
        bail!("{} values for a {n_rows}x{n_cols} matrix", values.len());
    }
    if values.iter().any(|v| !v.is_finite()) {
        bail!("matrix has non-finite values");
    }
    let f = scale(values.iter().copied());
    let pixels: Vec<[u8; 3]> = values.iter().map(|&v| diverging(f(v))).collect();
    Ok(ppm(n_cols, n_rows, &pixels))
}
