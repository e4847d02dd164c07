//! End-to-end run: annotate → balance → fit → group → correct →
//! overlay / hierarchy / network, every artifact hashed into a manifest.

use std::collections::BTreeMap;
use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use corsem_core::correct::{apply_correction, mc_cluster_threshold, ClusterThreshold};
use corsem_core::design::{align_rows, balance_indices};
use corsem_core::encode::{
    feature_similarity_annotate, vqa_annotate, AnswerCache, EmbeddingSet, FixtureBackend,
    HttpBackend, PromptTemplate,
};
use corsem_core::glm::{fit_label_map, fit_multivariate, group_ttest};
use corsem_core::rng::derive_key;
use corsem_core::semantics::{
    build_network, cluster_mean_maps, hierarchy_overlay, overlay_counts, similarity_matrix,
    to_distance, ward_cluster, HierarchyChain, OverlayCategory, OverlayCounts,
};
use corsem_core::{LabelSet, MatrixContainer, StatMap, VolumeGeometry};
use serde::Serialize;

use crate::config::{AnnotationSource, GlmMode, PipelineConfig, SimilaritySource};
use crate::manifest::{label_stem, ArtifactWriter, Manifest, RunStatus};

/// A failed run: the stage that failed and a one-line reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

impl fmt::Display for PipelineError {
    /// A single line of JSON: `{"status":"error","stage":…,"message":…}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::json!({
            "status": "error",
            "stage": self.stage,
            "message": self.message,
        });
        write!(f, "{v}")
    }
}

impl std::error::Error for PipelineError {}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

/// Balancing seed for one subject, so each subject draws its own subsample.
pub fn subject_seed(seed: u64, subject: usize) -> u64 {
    let key = derive_key(seed, "subject", &(subject as u64).to_le_bytes());
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

fn read_ids(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read stimulus list {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Builds the stimuli × labels matrix from the configured source.
pub fn annotate(cfg: &PipelineConfig, labels: &LabelSet, workers: usize) -> Result<MatrixContainer> {
    let template = match &cfg.template {
        Some(t) => PromptTemplate::new(t.clone())?,
        None => PromptTemplate::default(),
    };
    let m = match &cfg.annotations {
        AnnotationSource::Matrix { path } => {
            let m = MatrixContainer::read(path)?;
            if m.n_cols() != labels.len() {
                bail!(
                    "annotation matrix {} has {} columns for {} labels",
                    path.display(),
                    m.n_cols(),
                    labels.len()
                );
            }
            m
        }
        AnnotationSource::Fixture { fixture, stimuli } => {
            let backend = FixtureBackend::load(fixture)?;
            vqa_annotate(&read_ids(stimuli)?, labels, &template, &backend, None, workers)?
        }
        AnnotationSource::Http {
            backend,
            stimuli,
            cache_dir,
            max_in_flight,
        } => {
            let http = HttpBackend::new(backend.clone())?;
            let cache = cache_dir.as_ref().map(AnswerCache::new).transpose()?;
            vqa_annotate(
                &read_ids(stimuli)?,
                labels,
                &template,
                &http,
                cache.as_ref(),
                *max_in_flight,
            )?
        }
        AnnotationSource::FeatureSimilarity {
            image_vectors,
            image_ids,
            text_vectors,
            text_ids,
        } => {
            let images = EmbeddingSet::load(image_vectors, image_ids)?;
            let texts = EmbeddingSet::load(text_vectors, text_ids)?;
            feature_similarity_annotate(&images, &texts, labels)?
        }
    };
    Ok(m)
}

pub fn is_binary(m: &MatrixContainer) -> bool {
    m.values().iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Subject-level maps for every label, plus the balanced designs used.
pub fn fit_subject(
    bold: &MatrixContainer,
    annotations: &MatrixContainer,
    labels: &LabelSet,
    mode: GlmMode,
    seed: u64,
    workers: usize,
) -> Result<(Vec<StatMap>, Vec<corsem_core::design::BalancedDesign>)> {
    if bold.n_rows() != annotations.n_rows() {
        bail!(
            "response matrix has {} rows, annotations have {}",
            bold.n_rows(),
            annotations.n_rows()
        );
    }
    let mut designs = Vec::new();
    let maps = match mode {
        GlmMode::Multivariate => fit_multivariate(bold, annotations, labels, workers)?,
        GlmMode::Balanced if is_binary(annotations) => {
            let mut maps = Vec::with_capacity(labels.len());
            for (j, label) in labels.iter().enumerate() {
                let column = annotations.column(j);
                let design = balance_indices(&column, label, seed)?;
                let x: Vec<f32> = design.kept_row_indices.iter().map(|&i| column[i]).collect();
                let y = align_rows(bold, &design)?;
                maps.push(fit_label_map(&y, &x, label, Some(&design), workers)?);
                designs.push(design);
            }
            maps
        }
        // Continuous regressors are never balanced.
        GlmMode::Balanced | GlmMode::Unbalanced => labels
            .iter()
            .enumerate()
            .map(|(j, label)| fit_label_map(bold, &annotations.column(j), label, None, workers))
            .collect::<corsem_core::Result<Vec<_>>>()?,
    };
    Ok((maps, designs))
}

#[derive(Serialize)]
struct HierarchySummary<'a> {
    chain: usize,
    upper: &'a str,
    lower: &'a str,
    path: String,
    counts: BTreeMap<&'static str, usize>,
}

pub fn counts_container(c: &OverlayCounts) -> Result<MatrixContainer> {
    let n = c.total.len();
    let values: Vec<f32> = [&c.total, &c.positive, &c.negative]
        .iter()
        .flat_map(|row| row.iter().map(|&v| v as f32))
        .collect();
    Ok(MatrixContainer::new(3, n, values)?)
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    seed: u64,
    workers: usize,
    w: ArtifactWriter,
    stage: &'static str,
    notes: Vec<String>,
}

impl Run<'_> {
    fn execute(&mut self) -> Result<()> {
        let cfg = self.cfg;
        self.stage = "config";
        self.w.text("config", "config.json", &cfg.echo_json())?;
        let geom = VolumeGeometry::load(&cfg.geometry)?;
        let labels = LabelSet::new(cfg.labels.clone())?;
        let chains = cfg
            .hierarchy
            .iter()
            .map(|c| HierarchyChain::new(c.clone(), &labels))
            .collect::<corsem_core::Result<Vec<_>>>()?;
        let stems: Vec<String> = labels.iter().enumerate().map(|(i, l)| label_stem(i, l)).collect();

        self.stage = "annotate";
        let annotations = annotate(cfg, &labels, self.workers)?;
        self.w.container("annotate", "annotations/annotations.bin", &annotations)?;
        self.w.json("annotate", "annotations/labels.json", &labels)?;

        self.stage = "fit";
        if cfg.glm == GlmMode::Balanced && !is_binary(&annotations) {
            self.notes.push("continuous annotations: balancing skipped".into());
        }
        let mut subject_maps: Vec<Vec<StatMap>> = Vec::with_capacity(cfg.bold.len());
        for (s, path) in cfg.bold.iter().enumerate() {
            let bold = MatrixContainer::read(path)?;
            if bold.n_cols() != geom.n_masked() {
                bail!(
                    "{} has {} columns, mask has {} voxels",
                    path.display(),
                    bold.n_cols(),
                    geom.n_masked()
                );
            }
            let sub = format!("sub-{:02}", s + 1);
            let (maps, designs) = fit_subject(
                &bold,
                &annotations,
                &labels,
                cfg.glm,
                subject_seed(self.seed, s),
                self.workers,
            )?;
            for (d, stem) in designs.iter().zip(&stems) {
                self.w.text("balance", &format!("designs/{sub}/{stem}.json"), &d.to_json())?;
            }
            for (m, stem) in maps.iter().zip(&stems) {
                self.w.statmap("fit", &format!("subjects/{sub}"), stem, m)?;
            }
            subject_maps.push(maps);
        }

        self.stage = "group";
        let analysis: Vec<StatMap> = if subject_maps.len() >= 2 {
            let mut out = Vec::with_capacity(labels.len());
            for (j, label) in labels.iter().enumerate() {
                let betas: Vec<&[f32]> = subject_maps.iter().map(|m| m[j].beta.as_slice()).collect();
                let g = group_ttest(label, &betas, self.workers)?;
                self.w.statmap("group", "group", &stems[j], &g)?;
                out.push(g);
            }
            out
        } else {
            self.notes
                .push("single subject: subject maps stand in for group maps".into());
            subject_maps.pop().expect("one subject")
        };
        drop(subject_maps);

        self.stage = "correct";
        let df = analysis[0].df;
        let uniform_df = analysis.iter().all(|m| m.df == df).then_some(df);
        let params = cfg.correction.mc_params(self.seed, uniform_df);
        let threshold: ClusterThreshold = mc_cluster_threshold(&geom, &params, self.workers)?;
        self.w.text("correct", "correct/cluster_threshold.json", &threshold.to_json())?;
        let mut corrected = Vec::with_capacity(analysis.len());
        for (m, stem) in analysis.iter().zip(&stems) {
            let c = apply_correction(m, &threshold, &geom)?;
            self.w.statmap("correct", "corrected", stem, &c)?;
            corrected.push(c);
        }

        self.stage = "overlay";
        let refs: Vec<&StatMap> = corrected.iter().collect();
        let counts = overlay_counts(&refs)?;
        self.w.container("overlay", "overlay/counts.bin", &counts_container(&counts)?)?;

        self.stage = "hierarchy";
        let mut summaries = Vec::new();
        for (ci, chain) in chains.iter().enumerate() {
            for (upper, lower) in chain.pairs() {
                let ui = labels.position(upper).expect("validated");
                let li = labels.position(lower).expect("validated");
                let cats = hierarchy_overlay(&corrected[ui], &corrected[li])?;
                let codes: Vec<f32> = cats.iter().map(|c| c.code() as f32).collect();
                let rel = format!("hierarchy/chain{:02}_{}__{}.bin", ci + 1, stems[ui], stems[li]);
                self.w.container("hierarchy", &rel, &MatrixContainer::row_vector(codes)?)?;
                let mut tally: BTreeMap<&'static str, usize> =
                    OverlayCategory::ALL.iter().map(|c| (c.name(), 0)).collect();
                for c in &cats {
                    *tally.get_mut(c.name()).expect("all categories") += 1;
                }
                summaries.push(HierarchySummary {
                    chain: ci + 1,
                    upper,
                    lower,
                    path: rel,
                    counts: tally,
                });
            }
        }
        if !summaries.is_empty() {
            self.w.json("hierarchy", "hierarchy/summary.json", &summaries)?;
        }

        self.stage = "network";
        if labels.len() < 2 {
            self.notes.push("single label: network stage skipped".into());
            return Ok(());
        }
        let source: Vec<&StatMap> = match cfg.similarity_source {
            SimilaritySource::Group => analysis.iter().collect(),
            SimilaritySource::Corrected => corrected.iter().collect(),
        };
        let sim = similarity_matrix(&source, "t", self.workers)?;
        let dist = to_distance(&sim)?;
        let (dendrogram, assignment) = ward_cluster(&dist, cfg.k)?;
        let means = cluster_mean_maps(&source, &assignment)?;
        let network = build_network(&sim, &labels, &assignment, cfg.edge_threshold)?;
        self.w.container("network", "network/similarity.bin", &sim.to_container()?)?;
        self.w.container("network", "network/distance.bin", &dist.to_container()?)?;
        self.w.json("network", "network/labels.json", &labels)?;
        self.w.json("network", "network/dendrogram.json", &dendrogram)?;
        let n_vox = geom.n_masked();
        let flat: Vec<f32> = means.into_iter().flatten().collect();
        let k = flat.len() / n_vox;
        self.w.container(
            "network",
            "network/cluster_means.bin",
            &MatrixContainer::new(k, n_vox, flat)?,
        )?;
        self.w.text("network", "network/network.json", &network.to_json())?;
        self.w.text("network", "network/network.graphml", &network.to_graphml())?;
        Ok(())
    }
}

/// Runs the whole pipeline into `cfg.out_dir`.
///
/// Validation failures return before anything is written. Any later failure
/// still writes a manifest, marked incomplete, naming the failed stage and
/// listing what was written up to that point.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Manifest, PipelineError> {
    let fail = |stage: &str, e: anyhow::Error| PipelineError {
        stage: stage.to_string(),
        message: one_line(&e),
    };
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| fail("validate", anyhow!("no output directory given")))?;
    cfg.validate().map_err(|e| fail("validate", e))?;
    let seed = cfg.seed.expect("validated");
    let w = ArtifactWriter::new(&out).map_err(|e| fail("validate", e))?;
    let mut run = Run {
        cfg,
        seed,
        workers: cfg.workers(),
        w,
        stage: "config",
        notes: Vec::new(),
    };
    let result = run.execute();
    let status = if result.is_ok() {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    };
    let mut manifest = run.w.manifest(status, Some(seed));
    manifest.notes = run.notes.clone();
    if let Err(e) = &result {
        manifest.failed_stage = Some(run.stage.to_string());
        manifest.error = Some(one_line(e));
    }
    run.w.finish(&manifest).map_err(|e| fail(run.stage, e))?;
    match result {
        Ok(()) => Ok(manifest),
        Err(e) => Err(fail(run.stage, e)),
    }
}
