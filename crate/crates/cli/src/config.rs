//! Pipeline configuration: one JSON file, every analysis knob overridable
//! from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use corsem_core::correct::{Connectivity, McParams};
use corsem_core::encode::HttpBackendConfig;
use corsem_core::semantics::{DEFAULT_CLUSTER_COUNT, DEFAULT_EDGE_THRESHOLD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmMode {
    /// One regression per label after balancing yes/no rows.
    #[default]
    Balanced,
    /// One regression per label on all rows.
    Unbalanced,
    /// All labels in one multiple regression.
    Multivariate,
}

/// Which maps feed the label similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    #[default]
    Group,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum AnnotationSource {
    /// Precomputed stimuli × labels container.
    Matrix { path: PathBuf },
    /// VQA answers from a `stimulus_id\tlabel\tanswer` fixture.
    Fixture { fixture: PathBuf, stimuli: PathBuf },
    /// VQA answers from a running service.
    Http {
        #[serde(flatten)]
        backend: HttpBackendConfig,
        stimuli: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache_dir: Option<PathBuf>,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    /// Cosine similarity of image and label-text embeddings.
    FeatureSimilarity {
        image_vectors: PathBuf,
        image_ids: PathBuf,
        text_vectors: PathBuf,
        text_ids: PathBuf,
    },
}

fn default_in_flight() -> usize {
    4
}

impl AnnotationSource {
    pub fn method(&self) -> &'static str {
        match self {
            AnnotationSource::Matrix { .. } => "precomputed",
            AnnotationSource::Fixture { .. } | AnnotationSource::Http { .. } => "vqa",
            AnnotationSource::FeatureSimilarity { .. } => "feature-similarity",
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            AnnotationSource::Matrix { path } => vec![path],
            AnnotationSource::Fixture { fixture, stimuli } => vec![fixture, stimuli],
            AnnotationSource::Http {
                backend,
                stimuli,
                cache_dir,
                ..
            } => {
                let mut v = vec![&mut backend.image_dir, stimuli];
                if let Some(c) = cache_dir {
                    v.push(c);
                }
                v
            }
            AnnotationSource::FeatureSimilarity {
                image_vectors,
                image_ids,
                text_vectors,
                text_ids,
            } => vec![image_vectors, image_ids, text_vectors, text_ids],
        }
    }

    /// Input files that must exist before the run starts.
    pub fn required_files(&self) -> Vec<&Path> {
        match self {
            AnnotationSource::Matrix { path } => vec![path],
            AnnotationSource::Fixture { fixture, stimuli } => vec![fixture, stimuli],
            AnnotationSource::Http { backend, stimuli, .. } => vec![&backend.image_dir, stimuli],
            AnnotationSource::FeatureSimilarity {
                image_vectors,
                image_ids,
                text_vectors,
                text_ids,
            } => vec![image_vectors, image_ids, text_vectors, text_ids],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub voxel_p: f64,
    pub fwhm_mm: f64,
    pub connectivity: Connectivity,
    pub n_iterations: usize,
    pub alpha: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        let d = McParams::default();
        Self {
            voxel_p: d.voxel_p,
            fwhm_mm: d.fwhm_mm,
            connectivity: d.connectivity,
            n_iterations: d.n_iterations,
            alpha: d.alpha,
        }
    }
}

impl CorrectionConfig {
    pub fn mc_params(&self, seed: u64, df: Option<u64>) -> McParams {
        McParams {
            voxel_p: self.voxel_p,
            fwhm_mm: self.fwhm_mm,
            connectivity: self.connectivity,
            n_iterations: self.n_iterations,
            alpha: self.alpha,
            seed,
            df,
        }
    }
}

fn default_k() -> usize {
    DEFAULT_CLUSTER_COUNT
}

fn default_edge_threshold() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Execution settings; left out of the echoed config so outputs do not
    /// depend on where or how wide a run was.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub geometry: PathBuf,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub annotations: AnnotationSource,
    /// One response matrix per subject.
    pub bold: Vec<PathBuf>,
    #[serde(default)]
    pub glm: GlmMode,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub hierarchy: Vec<Vec<String>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_edge_threshold")]
    pub edge_threshold: f64,
    #[serde(default)]
    pub similarity_source: SimilaritySource,
    /// Free-form model name for comparison tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Overrides the method name derived from the annotation source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

/// Command-line overrides; `None` leaves the config value untouched.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub voxel_p: Option<f64>,
    pub fwhm_mm: Option<f64>,
    pub connectivity: Option<Connectivity>,
    pub iterations: Option<usize>,
    pub k: Option<usize>,
    pub edge_threshold: Option<f64>,
}

impl PipelineConfig {
    /// Parses a config and makes every relative path relative to the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.geometry);
        self.bold.iter_mut().for_each(fix);
        self.annotations.paths_mut().into_iter().for_each(fix);
        if let Some(out) = self.out_dir.as_mut() {
            fix(out);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = o.workers {
            self.workers = Some(v);
        }
        if let Some(v) = &o.out {
            self.out_dir = Some(v.clone());
        }
        if let Some(v) = o.voxel_p {
            self.correction.voxel_p = v;
        }
        if let Some(v) = o.fwhm_mm {
            self.correction.fwhm_mm = v;
        }
        if let Some(v) = o.connectivity {
            self.correction.connectivity = v;
        }
        if let Some(v) = o.iterations {
            self.correction.n_iterations = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.edge_threshold {
            self.edge_threshold = v;
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }

    pub fn method_name(&self) -> String {
        self.method
            .clone()
            .unwrap_or_else(|| self.annotations.method().to_string())
    }

    /// Checks everything that can be checked without computing: seed, k,
    /// thresholds, chains and the existence of every input file.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            bail!("config has no seed");
        }
        if self.labels.is_empty() {
            bail!("config has no labels");
        }
        if self.k < 1 || self.k > self.labels.len() {
            bail!("k = {} outside 1..={}", self.k, self.labels.len());
        }
        if !(self.edge_threshold > -1.0 && self.edge_threshold < 1.0) {
            bail!("edge threshold {} outside (-1, 1)", self.edge_threshold);
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        let c = &self.correction;
        if !(c.voxel_p > 0.0 && c.voxel_p < 1.0) {
            bail!("voxel p {} outside (0, 1)", c.voxel_p);
        }
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            bail!("alpha {} outside (0, 1)", c.alpha);
        }
        if !(c.fwhm_mm >= 0.0) {
            bail!("fwhm {} must be >= 0", c.fwhm_mm);
        }
        if c.n_iterations < corsem_core::correct::MIN_ITERATIONS {
            bail!(
                "at least {} iterations required, got {}",
                corsem_core::correct::MIN_ITERATIONS,
                c.n_iterations
            );
        }
        if self.bold.is_empty() {
            bail!("config lists no bold files");
        }
        for chain in &self.hierarchy {
            if chain.len() < 2 {
                bail!("hierarchy chain {chain:?} has fewer than 2 labels");
            }
            for l in chain {
                if !self.labels.contains(l) {
                    bail!("hierarchy label {l:?} is not in the label set");
                }
            }
        }
        let mut files: Vec<&Path> = vec![&self.geometry];
        files.extend(self.bold.iter().map(PathBuf::as_path));
        files.extend(self.annotations.required_files());
        for f in files {
            if !f.exists() {
                bail!("missing input file {}", f.display());
            }
        }
        Ok(())
    }

    /// Config as echoed into the output directory.
    pub fn echo_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
