//! Command-line surface: one subcommand per stage plus `run`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use corsem_core::correct::{apply_correction, mc_cluster_threshold, Connectivity, McParams};
use corsem_core::glm::group_ttest;
use corsem_core::semantics::{
    build_network, cluster_mean_maps, hierarchy_overlay, overlay_counts, similarity_matrix,
    to_distance, ward_cluster, DEFAULT_CLUSTER_COUNT, DEFAULT_EDGE_THRESHOLD,
};
use corsem_core::synth::{
    generate_hierarchy_phantom, generate_phantom, HierarchyOverrides, Phantom, PhantomSpec, RoiSpec,
};
use corsem_core::{LabelSet, MatrixContainer, StatMap, VolumeGeometry};
use serde::Deserialize;

use crate::compare::{compare_methods, to_tsv};
use crate::config::{AnnotationSource, GlmMode, Overrides, PipelineConfig};
use crate::manifest::{label_stem, ArtifactWriter, RunStatus};
use crate::pipeline::{annotate, counts_container, fit_subject, run_pipeline, PipelineError};
use crate::render::{render_map, render_matrix, Axis};

#[derive(Debug, Parser)]
#[command(name = "corsem", version, about = "Semantic-regressor voxelwise mapping pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn parse_connectivity(s: &str) -> std::result::Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("connectivity must be 6, 18 or 26, got {s:?}"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ExecFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub exec: ExecFlags,
    #[arg(long)]
    pub voxel_p: Option<f64>,
    #[arg(long)]
    pub fwhm_mm: Option<f64>,
    #[arg(long, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub edge_threshold: Option<f64>,
}

impl ConfigFlags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.exec.seed,
            workers: self.exec.workers,
            out: self.exec.out.clone(),
            voxel_p: self.voxel_p,
            fwhm_mm: self.fwhm_mm,
            connectivity: self.connectivity,
            iterations: self.iterations,
            k: self.k,
            edge_threshold: self.edge_threshold,
        }
    }

    pub fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        cfg.apply(&self.overrides());
        if let Some(out) = cfg.out_dir.as_mut() {
            *out = std::path::absolute(&*out).unwrap_or_else(|_| out.clone());
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct McFlags {
    #[arg(long, default_value_t = 0.05)]
    pub voxel_p: f64,
    #[arg(long, default_value_t = 3.0)]
    pub fwhm_mm: f64,
    #[arg(long, value_parser = parse_connectivity, default_value = "6")]
    pub connectivity: Connectivity,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom (annotations, responses, truth, ready-to-run config).
    Synth {
        /// Phantom spec JSON.
        #[arg(long, conflicts_with = "hierarchy")]
        spec: Option<PathBuf>,
        /// Hierarchy phantom JSON: `{"chain": [...], ...overrides}`.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Build the annotation matrix from the configured source.
    Annotate {
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Subject-level maps for every label.
    Fit {
        #[arg(long)]
        bold: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// JSON array of label names, in annotation column order.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "balanced")]
        glm: GlmArg,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// One-sample t over subject slope maps of one label.
    Group {
        #[arg(long = "map", required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Monte Carlo cluster threshold and corrected maps.
    Correct {
        #[arg(long = "map", required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[arg(long)]
        geometry: PathBuf,
        #[command(flatten)]
        mc: McFlags,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Per-voxel counts of activated labels over corrected maps.
    Overlay {
        #[arg(long = "map", required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Sign-pattern categories of a superordinate/subordinate pair.
    Hierarchy {
        #[arg(long)]
        upper: PathBuf,
        #[arg(long)]
        lower: PathBuf,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Similarity, distance, Ward clusters and the thresholded network.
    Network {
        #[arg(long = "map", required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CLUSTER_COUNT)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
        edge_threshold: f64,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Mean group t within an ROI, one row per configuration.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// ROI JSON: `{"voxels": [...]}` or `{"blob": {"center": [x,y,z], "n_voxels": n}}`.
        #[arg(long)]
        roi: PathBuf,
        #[arg(long)]
        label: String,
        /// Output TSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render a map slice or a square matrix as a binary PPM.
    Render {
        /// Stat map JSON.
        #[arg(long, conflicts_with = "matrix")]
        map: Option<PathBuf>,
        #[arg(long, default_value = "t")]
        stat: String,
        /// Container to render, one pixel per entry.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "z")]
        axis: Axis,
        #[arg(long, default_value_t = 0)]
        slice: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline.
    Run {
        #[command(flatten)]
        flags: ConfigFlags,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum GlmArg {
    Balanced,
    Unbalanced,
    Multivariate,
}

impl From<GlmArg> for GlmMode {
    fn from(g: GlmArg) -> Self {
        match g {
            GlmArg::Balanced => GlmMode::Balanced,
            GlmArg::Unbalanced => GlmMode::Unbalanced,
            GlmArg::Multivariate => GlmMode::Multivariate,
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Annotate { .. } => "annotate",
            Command::Fit { .. } => "fit",
            Command::Group { .. } => "group",
            Command::Correct { .. } => "correct",
            Command::Overlay { .. } => "overlay",
            Command::Hierarchy { .. } => "hierarchy",
            Command::Network { .. } => "network",
            Command::Compare { .. } => "compare",
            Command::Render { .. } => "render",
            Command::Run { .. } => "run",
        }
    }
}

#[derive(Debug, Deserialize)]
struct HierarchyRequest {
    chain: Vec<String>,
    #[serde(flatten)]
    overrides: HierarchyOverrides,
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn out_dir(exec: &ExecFlags) -> Result<&Path> {
    exec.out.as_deref().context("--out is required")
}

fn load_maps(paths: &[PathBuf]) -> Result<Vec<StatMap>> {
    paths
        .iter()
        .map(|p| StatMap::load(p).with_context(|| format!("cannot load map {}", p.display())))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

/// Writes a phantom and a config that runs the pipeline on it through the
/// fixture VQA backend.
pub fn write_phantom(phantom: &Phantom, seed: u64, out: &Path) -> Result<PathBuf> {
    let mut w = ArtifactWriter::new(out)?;
    phantom.geometry.save(out.join("geometry.json"))?;
    w.container("synth", "annotations.bin", &phantom.annotations)?;
    w.json("synth", "labels.json", &phantom.labels)?;
    w.text("synth", "truth.json", &phantom.truth.to_json())?;
    let n = phantom.annotations.n_rows();
    let ids: Vec<String> = (0..n).map(|i| format!("stim_{i:05}")).collect();
    w.text("synth", "stimuli.txt", &(ids.join("\n") + "\n"))?;
    let mut tsv = String::from("stimulus_id\tlabel\tanswer\n");
    for (i, id) in ids.iter().enumerate() {
        for (j, label) in phantom.labels.iter().enumerate() {
            let a = if phantom.annotations.get(i, j) == 1.0 { "yes" } else { "no" };
            tsv.push_str(&format!("{id}\t{label}\t{a}\n"));
        }
    }
    w.text("synth", "answers.tsv", &tsv)?;
    let mut bold = Vec::new();
    for (s, b) in phantom.bold.iter().enumerate() {
        let rel = format!("bold_sub-{:02}.bin", s + 1);
        w.container("synth", &rel, b)?;
        bold.push(PathBuf::from(rel));
    }
    let cfg = PipelineConfig {
        seed: Some(seed),
        workers: None,
        out_dir: None,
        geometry: "geometry.json".into(),
        labels: phantom.labels.as_slice().to_vec(),
        template: None,
        annotations: AnnotationSource::Fixture {
            fixture: "answers.tsv".into(),
            stimuli: "stimuli.txt".into(),
        },
        bold,
        glm: GlmMode::Balanced,
        correction: Default::default(),
        hierarchy: Vec::new(),
        k: phantom.labels.len().min(DEFAULT_CLUSTER_COUNT),
        edge_threshold: DEFAULT_EDGE_THRESHOLD,
        similarity_source: Default::default(),
        model: None,
        method: None,
    };
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, cfg.echo_json())?;
    w.finish(&w.manifest(RunStatus::Complete, Some(seed)))?;
    Ok(cfg_path)
}

fn synth(spec: &Option<PathBuf>, hierarchy: &Option<PathBuf>, exec: &ExecFlags) -> Result<()> {
    let out = out_dir(exec)?;
    match (spec, hierarchy) {
        (Some(path), None) => {
            let mut spec: PhantomSpec = read_json(path)?;
            if let Some(seed) = exec.seed {
                spec.seed = seed;
            }
            let p = generate_phantom(&spec)?;
            write_phantom(&p, spec.seed, out)?;
        }
        (None, Some(path)) => {
            let mut req: HierarchyRequest = read_json(path)?;
            if let Some(seed) = exec.seed {
                req.overrides.seed = seed;
            }
            let p = generate_hierarchy_phantom(&req.chain, &req.overrides)?;
            let cfg_path = write_phantom(&p, req.overrides.seed, out)?;
            // Hierarchy phantoms are built for unbalanced per-label fits.
            let mut cfg: PipelineConfig = read_json(&cfg_path)?;
            cfg.glm = GlmMode::Unbalanced;
            cfg.hierarchy = vec![req.chain.clone()];
            std::fs::write(&cfg_path, cfg.echo_json())?;
        }
        _ => bail!("give exactly one of --spec or --hierarchy"),
    }
    Ok(())
}

fn finish(w: &ArtifactWriter, seed: Option<u64>) -> Result<()> {
    w.finish(&w.manifest(RunStatus::Complete, seed))?;
    Ok(())
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth {
            spec,
            hierarchy,
            exec,
        } => synth(spec, hierarchy, exec),
        Command::Annotate { flags } => {
            let cfg = flags.load()?;
            let out = cfg.out_dir.clone().context("--out is required")?;
            let labels = LabelSet::new(cfg.labels.clone())?;
            let m = annotate(&cfg, &labels, cfg.workers())?;
            let mut w = ArtifactWriter::new(out)?;
            w.container("annotate", "annotations.bin", &m)?;
            w.json("annotate", "labels.json", &labels)?;
            finish(&w, cfg.seed)
        }
        Command::Fit {
            bold,
            annotations,
            labels,
            glm,
            exec,
        } => {
            let seed = exec.seed.context("--seed is required")?;
            let labels: LabelSet = read_json(labels)?;
            let bold = MatrixContainer::read(bold)?;
            let annotations = MatrixContainer::read(annotations)?;
            if annotations.n_cols() != labels.len() {
                bail!("{} annotation columns for {} labels", annotations.n_cols(), labels.len());
            }
            let (maps, designs) =
                fit_subject(&bold, &annotations, &labels, (*glm).into(), seed, workers(exec.workers))?;
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            for (i, d) in designs.iter().enumerate() {
                w.text("balance", &format!("designs/{}.json", label_stem(i, &d.label)), &d.to_json())?;
            }
            for (i, m) in maps.iter().enumerate() {
                w.statmap("fit", "maps", &label_stem(i, &m.label), m)?;
            }
            finish(&w, Some(seed))
        }
        Command::Group { maps, exec } => {
            let maps = load_maps(maps)?;
            let label = maps[0].label.clone();
            if maps.iter().any(|m| m.label != label) {
                bail!("group maps must all be for one label");
            }
            let betas: Vec<&[f32]> = maps.iter().map(|m| m.beta.as_slice()).collect();
            let g = group_ttest(&label, &betas, workers(exec.workers))?;
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            w.statmap("group", ".", &label_stem(0, &label), &g)?;
            finish(&w, None)
        }
        Command::Correct {
            maps,
            geometry,
            mc,
            exec,
        } => {
            let seed = exec.seed.context("--seed is required")?;
            let geom = VolumeGeometry::load(geometry)?;
            let maps = load_maps(maps)?;
            let params = McParams {
                voxel_p: mc.voxel_p,
                fwhm_mm: mc.fwhm_mm,
                connectivity: mc.connectivity,
                n_iterations: mc.iterations,
                alpha: mc.alpha,
                seed,
                df: Some(maps[0].df),
            };
            let thr = mc_cluster_threshold(&geom, &params, workers(exec.workers))?;
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            w.text("correct", "cluster_threshold.json", &thr.to_json())?;
            for (i, m) in maps.iter().enumerate() {
                let c = apply_correction(m, &thr, &geom)?;
                w.statmap("correct", "corrected", &label_stem(i, &m.label), &c)?;
            }
            finish(&w, Some(seed))
        }
        Command::Overlay { maps, exec } => {
            let maps = load_maps(maps)?;
            let refs: Vec<&StatMap> = maps.iter().collect();
            let counts = overlay_counts(&refs)?;
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            w.container("overlay", "counts.bin", &counts_container(&counts)?)?;
            finish(&w, None)
        }
        Command::Hierarchy { upper, lower, exec } => {
            let u = StatMap::load(upper)?;
            let l = StatMap::load(lower)?;
            let cats = hierarchy_overlay(&u, &l)?;
            let codes: Vec<f32> = cats.iter().map(|c| c.code() as f32).collect();
            let names: Vec<&str> = cats.iter().map(|c| c.name()).collect();
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            w.container("hierarchy", "categories.bin", &MatrixContainer::row_vector(codes)?)?;
            w.json("hierarchy", "categories.json", &names)?;
            finish(&w, None)
        }
        Command::Network {
            maps,
            k,
            edge_threshold,
            exec,
        } => {
            let maps = load_maps(maps)?;
            let labels = LabelSet::new(maps.iter().map(|m| m.label.clone()).collect())?;
            let refs: Vec<&StatMap> = maps.iter().collect();
            let sim = similarity_matrix(&refs, "t", workers(exec.workers))?;
            let dist = to_distance(&sim)?;
            let (dend, assign) = ward_cluster(&dist, *k)?;
            let means = cluster_mean_maps(&refs, &assign)?;
            let net = build_network(&sim, &labels, &assign, *edge_threshold)?;
            let mut w = ArtifactWriter::new(out_dir(exec)?)?;
            w.container("network", "similarity.bin", &sim.to_container()?)?;
            w.container("network", "distance.bin", &dist.to_container()?)?;
            w.json("network", "labels.json", &labels)?;
            w.json("network", "dendrogram.json", &dend)?;
            let n_vox = maps[0].n_voxels();
            let flat: Vec<f32> = means.into_iter().flatten().collect();
            w.container(
                "network",
                "cluster_means.bin",
                &MatrixContainer::new(flat.len() / n_vox, n_vox, flat)?,
            )?;
            w.text("network", "network.json", &net.to_json())?;
            w.text("network", "network.graphml", &net.to_graphml())?;
            finish(&w, None)
        }
        Command::Compare {
            configs,
            roi,
            label,
            out,
            workers,
        } => {
            let cfgs = configs
                .iter()
                .map(|p| {
                    let mut c = PipelineConfig::load(p)?;
                    if workers.is_some() {
                        c.workers = *workers;
                    }
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let roi: RoiSpec = read_json(roi)?;
            let tsv = to_tsv(&compare_methods(&cfgs, &roi, label)?);
            match out {
                Some(p) => std::fs::write(p, tsv).with_context(|| format!("cannot write {}", p.display()))?,
                None => print!("{tsv}"),
            }
            Ok(())
        }
        Command::Render {
            map,
            stat,
            matrix,
            geometry,
            axis,
            slice,
            out,
        } => {
            let bytes = match (map, matrix) {
                (Some(m), None) => {
                    let geom = VolumeGeometry::load(
                        geometry.as_ref().context("--geometry is required with --map")?,
                    )?;
                    let m = StatMap::load(m)?;
                    let values = m
                        .statistic(stat)
                        .with_context(|| format!("unknown statistic {stat:?}"))?;
                    render_map(values, &geom, *axis, *slice)?
                }
                (None, Some(path)) => {
                    let c = MatrixContainer::read_allow_infinite(path)?;
                    let v: Vec<f64> = c.values().iter().map(|&x| x as f64).collect();
                    render_matrix(&v, c.n_rows(), c.n_cols())?
                }
                _ => bail!("give exactly one of --map or --matrix"),
            };
            std::fs::write(out, bytes).with_context(|| format!("cannot write {}", out.display()))?;
            Ok(())
        }
        Command::Run { .. } => unreachable!("handled by run_cli"),
    }
}

/// Executes one parsed command line; errors carry the failing stage.
pub fn run_cli(cli: &Cli) -> std::result::Result<(), PipelineError> {
    if let Command::Run { flags } = &cli.command {
        let cfg = flags.load().map_err(|e| PipelineError {
            stage: "validate".into(),
            message: format!("{e:#}").replace('\n', " "),
        })?;
        return run_pipeline(&cfg).map(|_| ());
    }
    dispatch(&cli.command).map_err(|e| PipelineError {
        stage: cli.command.name().into(),
        message: format!("{e:#}").replace('\n', " "),
    })
}
