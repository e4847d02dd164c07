//! Output directory bookkeeping: every artifact is written through an
//! [`ArtifactWriter`], which records its stage, relative path and SHA-256.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use corsem_core::rng::sha256_hex;
use corsem_core::{MatrixContainer, StatMap};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }

    pub fn artifacts_in(&self, stage: &str) -> impl Iterator<Item = &Artifact> {
        let stage = stage.to_string();
        self.artifacts.iter().filter(move |a| a.stage == stage)
    }

    /// Re-hashes every listed file under `root`; returns the first mismatch.
    pub fn verify(&self, root: &Path) -> Result<Option<String>> {
        for a in &self.artifacts {
            let bytes = std::fs::read(root.join(&a.path))
                .with_context(|| format!("listed artifact {} is missing", a.path))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Ok(Some(a.path.clone()));
            }
        }
        Ok(None)
    }
}

/// File-name-safe stem for a label, prefixed by its index so distinct labels
/// never collide.
pub fn label_stem(index: usize, label: &str) -> String {
    let clean: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    format!("{index:02}_{clean}")
}

pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root,
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    fn target(&self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        Ok(path)
    }

    /// Records a file that already exists under the root.
    fn record(&mut self, stage: &str, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        self.artifacts.push(Artifact {
            stage: stage.to_string(),
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(path)
    }

    pub fn bytes(&mut self, stage: &str, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.target(rel)?;
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(stage, rel)
    }

    pub fn text(&mut self, stage: &str, rel: &str, text: &str) -> Result<PathBuf> {
        self.bytes(stage, rel, text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, stage: &str, rel: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).context("serialize artifact")?;
        self.text(stage, rel, &text)
    }

    pub fn container(&mut self, stage: &str, rel: &str, c: &MatrixContainer) -> Result<PathBuf> {
        self.bytes(stage, rel, &c.to_bytes())
    }

    /// Saves `<dir>/<stem>.json` and its statistic files; returns the JSON path.
    pub fn statmap(&mut self, stage: &str, dir: &str, stem: &str, map: &StatMap) -> Result<PathBuf> {
        let abs = self.target(&format!("{dir}/{stem}.json"))?;
        map.save(abs.parent().expect("has parent"), stem)?;
        for stat in ["beta", "se", "t", "r2", "p"] {
            self.record(stage, &format!("{dir}/{stem}_{stat}.bin"))?;
        }
        self.record(stage, &format!("{dir}/{stem}.json"))
    }

    /// Writes `manifest.json` (not itself listed).
    pub fn finish(&self, manifest: &Manifest) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(manifest).context("serialize manifest")?;
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn manifest(&self, status: RunStatus, seed: Option<u64>) -> Manifest {
        Manifest {
            status,
            seed,
            failed_stage: None,
            error: None,
            notes: Vec::new(),
            artifacts: self.artifacts.clone(),
        }
    }
}
