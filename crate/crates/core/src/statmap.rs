//! Per-voxel statistic maps and their JSON manifest + container files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::geometry::resolve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Subject,
    Group,
    Corrected,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Subject => "subject",
            Level::Group => "group",
            Level::Corrected => "corrected",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_hash: Option<String>,
    #[serde(default)]
    pub degenerate_voxels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
}

/// One label's statistics at one analysis level, in masked-voxel order.
///
/// A `t` of `±inf` marks a zero-residual fit with nonzero slope.
#[derive(Debug, Clone, PartialEq)]
pub struct StatMap {
    pub label: String,
    pub level: Level,
    pub df: u64,
    pub beta: Vec<f32>,
    pub se: Vec<f32>,
    pub t: Vec<f32>,
    pub r2: Vec<f32>,
    pub p: Vec<f32>,
    pub meta: StatMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatManifest {
    pub label: String,
    pub level: Level,
    pub df: u64,
    pub stats: BTreeMap<String, String>,
    #[serde(default)]
    pub meta: StatMeta,
}

const STAT_NAMES: [&str; 5] = ["beta", "se", "t", "r2", "p"];

impl StatMap {
    /// All-zero map (p = 1) of the given size.
    pub fn empty(label: impl Into<String>, level: Level, df: u64, n_voxels: usize) -> Self {
        Self {
            label: label.into(),
            level,
            df,
            beta: vec![0.0; n_voxels],
            se: vec![0.0; n_voxels],
            t: vec![0.0; n_voxels],
            r2: vec![0.0; n_voxels],
            p: vec![1.0; n_voxels],
            meta: StatMeta::default(),
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.t.len()
    }

    fn arrays(&self) -> [&Vec<f32>; 5] {
        [&self.beta, &self.se, &self.t, &self.r2, &self.p]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_voxels();
        if self.arrays().iter().any(|a| a.len() != n) {
            return Err(Error::Shape(format!(
                "stat map {:?}: statistic arrays differ in length",
                self.label
            )));
        }
        if self.r2.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Shape(format!("stat map {:?}: r2 outside [0,1]", self.label)));
        }
        if self.p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Shape(format!("stat map {:?}: p outside [0,1]", self.label)));
        }
        Ok(())
    }

    pub fn statistic(&self, name: &str) -> Option<&[f32]> {
        match name {
            "beta" => Some(&self.beta),
            "se" => Some(&self.se),
            "t" => Some(&self.t),
            "r2" => Some(&self.r2),
            "p" => Some(&self.p),
            _ => None,
        }
    }

    /// Writes `<dir>/<stem>.json` plus one `<stem>_<stat>.bin` per statistic.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut stats = BTreeMap::new();
        for (name, values) in STAT_NAMES.iter().zip(self.arrays()) {
            let file = format!("{stem}_{name}.bin");
            MatrixContainer::row_vector(values.clone())?.write(dir.join(&file))?;
            stats.insert(name.to_string(), file);
        }
        let manifest = StatManifest {
            label: self.label.clone(),
            level: self.level,
            df: self.df,
            stats,
            meta: self.meta.clone(),
        };
        let path = dir.join(format!("{stem}.json"));
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("stat manifest", e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads a manifest; statistic files may hold `±inf` sentinels but never NaN.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: StatManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let mut arrays: Vec<Vec<f32>> = Vec::with_capacity(5);
        for name in STAT_NAMES {
            let rel = m.stats.get(name).ok_or_else(|| {
                Error::Shape(format!("{}: missing statistic {name:?}", path.display()))
            })?;
            let c = MatrixContainer::read_allow_infinite(resolve(path, rel))?;
            arrays.push(c.into_values());
        }
        let mut it = arrays.into_iter();
        let map = StatMap {
            label: m.label,
            level: m.level,
            df: m.df,
            beta: it.next().unwrap(),
            se: it.next().unwrap(),
            t: it.next().unwrap(),
            r2: it.next().unwrap(),
            p: it.next().unwrap(),
            meta: m.meta,
        };
        map.validate()?;
        Ok(map)
    }
}
