//! Method comparison: mean group-level t within an ROI for one label, one
//! row per annotation configuration.

use anyhow::{bail, Context, Result};
use corsem_core::glm::group_ttest;
use corsem_core::synth::RoiSpec;
use corsem_core::{LabelSet, MatrixContainer, VolumeGeometry};

use crate::config::PipelineConfig;
use crate::pipeline::{annotate, fit_subject, subject_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub method: String,
    pub mean_t: f64,
}

pub fn resolve_roi(geom: &VolumeGeometry, roi: &RoiSpec) -> Result<Vec<usize>> {
    let voxels = match roi {
        RoiSpec::Voxels(v) => {
            if let Some(&bad) = v.iter().find(|&&i| i >= geom.n_masked()) {
                bail!("ROI voxel {bad} outside mask of {} voxels", geom.n_masked());
            }
            v.clone()
        }
        RoiSpec::Blob { center, n_voxels } => {
            corsem_core::synth::blob_roi(geom, *center, *n_voxels, &Default::default())?
        }
    };
    if voxels.is_empty() {
        bail!("ROI is empty");
    }
    Ok(voxels)
}

/// Uncorrected group t-map of `label` (the subject map when there is only
/// one subject).
pub fn label_t_map(cfg: &PipelineConfig, label: &str) -> Result<(VolumeGeometry, Vec<f32>)> {
    cfg.validate()?;
    let seed = cfg.seed.expect("validated");
    let workers = cfg.workers();
    let geom = VolumeGeometry::load(&cfg.geometry)?;
    let labels = LabelSet::new(cfg.labels.clone())?;
    let j = labels
        .position(label)
        .with_context(|| format!("label {label:?} not in config label set"))?;
    let annotations = annotate(cfg, &labels, workers)?;
    let only = LabelSet::new(vec![label.to_string()])?;
    let column = MatrixContainer::new(annotations.n_rows(), 1, annotations.column(j))?;
    let mut betas = Vec::new();
    let mut last = None;
    for (s, path) in cfg.bold.iter().enumerate() {
        let bold = MatrixContainer::read(path)?;
        let (mut maps, _) =
            fit_subject(&bold, &column, &only, cfg.glm, subject_seed(seed, s), workers)?;
        let m = maps.pop().expect("one label");
        betas.push(m.beta.clone());
        last = Some(m);
    }
    let t = if betas.len() >= 2 {
        let refs: Vec<&[f32]> = betas.iter().map(Vec::as_slice).collect();
        group_ttest(label, &refs, workers)?.t
    } else {
        last.expect("at least one subject").t
    };
    Ok((geom, t))
}

pub fn compare_methods(
    configs: &[PipelineConfig],
    roi: &RoiSpec,
    label: &str,
) -> Result<Vec<ComparisonRow>> {
    if configs.is_empty() {
        bail!("no configurations to compare");
    }
    let mut rows = Vec::with_capacity(configs.len());
    let mut first_geom: Option<VolumeGeometry> = None;
    for cfg in configs {
        let (geom, t) = label_t_map(cfg, label)?;
        if let Some(g) = &first_geom {
            if !g.same_space(&geom) {
                bail!("configurations do not share one geometry");
            }
        }
        let voxels = resolve_roi(&geom, roi)?;
        let mean_t = voxels.iter().map(|&v| t[v] as f64).sum::<f64>() / voxels.len() as f64;
        rows.push(ComparisonRow {
            model: cfg.model.clone().unwrap_or_else(|| "unspecified".into()),
            method: cfg.method_name(),
            mean_t,
        });
        first_geom.get_or_insert(geom);
    }
    Ok(rows)
}

pub fn to_tsv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model\tmethod\tmean_t\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{:.5}\n", r.model, r.method, r.mean_t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_shape() {
        let rows = vec![
            ComparisonRow {
                model: "blip".into(),
                method: "vqa".into(),
                mean_t: 2.81859,
            },
            ComparisonRow {
                model: "clip".into(),
                method: "feature-similarity".into(),
                mean_t: 2.09704,
            },
        ];
        assert_eq!(
            to_tsv(&rows),
            "model\tmethod\tmean_t\nblip\tvqa\t2.81859\nclip\tfeature-similarity\t2.09704\n"
        );
    }

    #[test]
    fn empty_roi_rejected() {
        let g = VolumeGeometry::full([2, 2, 2], [1.0; 3]).unwrap();
        assert!(resolve_roi(&g, &RoiSpec::Voxels(vec![])).is_err());
        assert!(resolve_roi(&g, &RoiSpec::Voxels(vec![8])).is_err());
        assert_eq!(resolve_roi(&g, &RoiSpec::Voxels(vec![3])).unwrap(), vec![3]);
    }
}
